//! Happens-before, message races and race-reversal prefixes.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use thiserror::Error;

use crate::tracemodel::{validate_input_log, Action, ActionBook, Ref, Tag, TraceDiagnostic};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HbError {
    #[error("malformed trace: happens-before has a cycle through {0}")]
    Cycle(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReversalError {
    #[error(transparent)]
    Hb(#[from] HbError),
    #[error("{0} was delivered but never received; there is no point to cut at")]
    NoCutPoint(Tag),
    #[error("{later} is received before {earlier} at {target}; nothing to reverse")]
    AlreadyReceived { earlier: Tag, later: Tag, target: Ref },
    #[error("reversal prefix is not a valid log: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<TraceDiagnostic>),
}

/// An action at a position in one process's trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub process: Ref,
    pub index: usize,
    pub action: Action,
}

pub type EventId = usize;

/// Which edges generate the order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderKind {
    /// Program order over whole sequences, send to deliver, deliver to
    /// receive, spawn to the child's first event.
    HappensBefore,
    /// As above, except that a deliver orders nothing but its own receive.
    /// Delivery of a message that sits unread in a mailbox cannot influence
    /// what the process does next, so this is the order that decides
    /// whether two deliveries could have happened the other way round.
    Causal,
}

/// A partial order over the events of a trace, stored as vector clocks.
#[derive(Debug, Clone)]
pub struct HBRelation {
    kind: OrderKind,
    events: Vec<Event>,
    lanes: BTreeMap<Ref, usize>,
    /// 1-based position of each event on its lane's chain; 0 for delivers
    /// in causal order, which are off the chain.
    pos: Vec<u32>,
    /// `clocks[e][lane]`: how far along that lane's chain e is reached.
    clocks: Vec<Vec<u32>>,
    topo: Vec<EventId>,
    by_action: BTreeMap<Action, EventId>,
}

impl HBRelation {
    pub fn kind(&self) -> OrderKind {
        self.kind
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn event(&self, id: EventId) -> &Event {
        &self.events[id]
    }

    pub fn find(&self, action: &Action) -> Option<EventId> {
        self.by_action.get(action).copied()
    }

    /// Reflexive.
    pub fn precedes(&self, a: EventId, b: EventId) -> bool {
        if a == b {
            return true;
        }
        if self.kind == OrderKind::Causal {
            if let Action::Deliver(tag) = &self.events[a].action {
                return self.find(&Action::Receive(tag.clone())).is_some_and(|r| self.precedes(r, b));
            }
            if let Action::Deliver(tag) = &self.events[b].action {
                return self.find(&Action::Send(tag.clone())).is_some_and(|s| self.precedes(a, s));
            }
        }
        let lane = self.lanes[&self.events[a].process];
        self.clocks[b][lane] >= self.pos[a]
    }

    /// Events in topological order; among events that are ready at the same
    /// time the one with the smaller tag (child ref for spawns) goes first.
    pub fn topological_order(&self) -> impl Iterator<Item = EventId> + '_ {
        self.topo.iter().copied()
    }
}

fn tie_key(e: &Event) -> (String, Ref, usize) {
    let name = match &e.action {
        Action::Spawn(r) => r.to_string(),
        other => other.tag().map(Tag::to_string).unwrap_or_default(),
    };
    (name, e.process.clone(), e.index)
}

pub fn happens_before(t: &ActionBook) -> Result<HBRelation, HbError> {
    build_order(t, OrderKind::HappensBefore)
}

pub fn causal_order(t: &ActionBook) -> Result<HBRelation, HbError> {
    build_order(t, OrderKind::Causal)
}

pub fn build_order(t: &ActionBook, kind: OrderKind) -> Result<HBRelation, HbError> {
    let on_chain = |a: &Action| kind == OrderKind::HappensBefore || !a.is_deliver();
    let mut events = Vec::new();
    let mut lanes = BTreeMap::new();
    let mut pos = Vec::new();
    let mut preds: Vec<Vec<EventId>> = Vec::new();
    let mut first_of: BTreeMap<Ref, EventId> = BTreeMap::new();
    for (r, seq) in t.iter() {
        lanes.insert(r.clone(), lanes.len());
        let mut prev: Option<EventId> = None;
        let mut n = 0u32;
        for (index, action) in seq.iter().enumerate() {
            let id = events.len();
            events.push(Event { process: r.clone(), index, action: action.clone() });
            if on_chain(action) {
                n += 1;
                pos.push(n);
                preds.push(prev.into_iter().collect());
                prev = Some(id);
                first_of.entry(r.clone()).or_insert(id);
            } else {
                pos.push(0);
                preds.push(Vec::new());
            }
        }
    }
    let by_action: BTreeMap<Action, EventId> =
        events.iter().enumerate().map(|(i, e)| (e.action.clone(), i)).collect();

    for (id, e) in events.iter().enumerate() {
        match &e.action {
            Action::Deliver(tag) => {
                if let Some(&s) = by_action.get(&Action::Send(tag.clone())) {
                    preds[id].push(s);
                }
            }
            Action::Receive(tag) => {
                let d = by_action.get(&Action::Deliver(tag.clone()));
                if let Some(&src) = d.or_else(|| by_action.get(&Action::Send(tag.clone()))) {
                    preds[id].push(src);
                }
            }
            Action::Spawn(child) => {
                if let Some(&first) = first_of.get(child) {
                    preds[first].push(id);
                }
            }
            Action::Send(_) => {}
        }
    }

    let mut succs: Vec<Vec<EventId>> = vec![Vec::new(); events.len()];
    let mut indegree = vec![0usize; events.len()];
    for (id, ps) in preds.iter().enumerate() {
        indegree[id] = ps.len();
        for &p in ps {
            succs[p].push(id);
        }
    }
    let mut ready: BinaryHeap<Reverse<((String, Ref, usize), EventId)>> = indegree
        .iter()
        .enumerate()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| Reverse((tie_key(&events[id]), id)))
        .collect();
    let mut topo = Vec::with_capacity(events.len());
    while let Some(Reverse((_, id))) = ready.pop() {
        topo.push(id);
        for &s in &succs[id] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.push(Reverse((tie_key(&events[s]), s)));
            }
        }
    }
    if topo.len() < events.len() {
        let stuck = (0..events.len()).find(|id| indegree[*id] > 0).expect("some event is left");
        let e = &events[stuck];
        return Err(HbError::Cycle(format!("{} at {}", e.action, e.process)));
    }

    let mut clocks = vec![vec![0u32; lanes.len()]; events.len()];
    for &id in &topo {
        let mut c = vec![0u32; lanes.len()];
        for &p in &preds[id] {
            for (slot, v) in c.iter_mut().zip(&clocks[p]) {
                *slot = (*slot).max(*v);
            }
        }
        if pos[id] > 0 {
            c[lanes[&events[id].process]] = pos[id];
        }
        clocks[id] = c;
    }
    Ok(HBRelation { kind, events, lanes, pos, clocks, topo, by_action })
}

/// Two consecutive deliveries to `target` whose order is not forced.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Race {
    pub earlier: Tag,
    pub later: Tag,
    pub target: Ref,
}

impl Race {
    pub fn new(earlier: Tag, later: Tag, target: Ref) -> Self {
        Race { earlier, later, target }
    }

    pub fn flipped(&self) -> Race {
        Race::new(self.later.clone(), self.earlier.clone(), self.target.clone())
    }
}

impl fmt::Display for Race {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} {}", self.target, self.earlier, self.later)
    }
}

pub fn render_races(races: &[Race]) -> String {
    races.iter().map(|r| format!("{r}\n")).collect()
}

/// Races ordered by target and position. Whether the second message could
/// have arrived first is judged by [`causal_order`].
pub fn find_races(t: &ActionBook) -> Result<Vec<Race>, HbError> {
    let hb = causal_order(t)?;
    Ok(find_races_with(t, &hb))
}

pub fn find_races_with(t: &ActionBook, hb: &HBRelation) -> Vec<Race> {
    let mut out = Vec::new();
    for (target, seq) in t.iter() {
        let delivered: Vec<&Tag> = seq
            .iter()
            .filter_map(|a| match a {
                Action::Deliver(tag) => Some(tag),
                _ => None,
            })
            .collect();
        for pair in delivered.windows(2) {
            let (first, second) = (pair[0], pair[1]);
            let send_first = hb.find(&Action::Send(first.clone()));
            let send_second = hb.find(&Action::Send(second.clone()));
            let (Some(sf), Some(ss)) = (send_first, send_second) else {
                continue;
            };
            if hb.event(sf).process == hb.event(ss).process {
                continue;
            }
            let d = hb.find(&Action::Deliver(first.clone())).expect("deliver is in the trace");
            if !hb.precedes(d, ss) {
                out.push(Race::new(first.clone(), second.clone(), target.clone()));
            }
        }
    }
    out
}

/// The log that replays `t` up to the point where the target consumed the
/// earlier message, and then makes it consume the later one instead.
pub fn prefix_for_reversal(t: &ActionBook, race: &Race) -> Result<ActionBook, ReversalError> {
    let hb = causal_order(t)?;
    prefix_for_reversal_with(t, &hb, race)
}

pub fn prefix_for_reversal_with(t: &ActionBook, hb: &HBRelation, race: &Race) -> Result<ActionBook, ReversalError> {
    let cut = hb
        .find(&Action::Receive(race.earlier.clone()))
        .filter(|&id| hb.event(id).process == race.target)
        .ok_or_else(|| ReversalError::NoCutPoint(race.earlier.clone()))?;
    if let Some(later) = hb.find(&Action::Receive(race.later.clone())) {
        if hb.event(later).index < hb.event(cut).index {
            return Err(ReversalError::AlreadyReceived {
                earlier: race.earlier.clone(),
                later: race.later.clone(),
                target: race.target.clone(),
            });
        }
    }
    let mut out = ActionBook::new();
    for (r, seq) in t.iter() {
        let mut kept = Vec::new();
        for (index, a) in seq.iter().enumerate() {
            if *r == race.target && index == hb.event(cut).index {
                kept.push(Action::Receive(race.later.clone()));
                break;
            }
            let id = hb.find(a).expect("every action is an event");
            if hb.precedes(cut, id) {
                break;
            }
            if !a.is_deliver() {
                kept.push(a.clone());
            }
        }
        out.insert(r.clone(), kept);
    }
    let out = out.pruned();
    validate_input_log(&out).map_err(ReversalError::Invalid)?;
    Ok(out)
}

/// True when every log action of `t` that happens before an action of
/// `prefix` is itself in `prefix`.
pub fn is_downward_closed(t: &ActionBook, prefix: &ActionBook) -> Result<bool, HbError> {
    let hb = causal_order(t)?;
    let in_prefix = |e: &Event| prefix.locate(&e.action).is_some();
    for (id, e) in hb.events().iter().enumerate() {
        if !in_prefix(e) {
            continue;
        }
        let missing = hb
            .events()
            .iter()
            .enumerate()
            .any(|(other, f)| !f.action.is_deliver() && !in_prefix(f) && hb.precedes(other, id));
        if missing {
            return Ok(false);
        }
    }
    Ok(true)
}
