//! Runs a module under the tracing scheduler.
//!
//! The runtime is a sequential simulation: it owns every process and the
//! scheduler state, picks the next process with an interleaving policy and
//! routes each concurrent action to the scheduler. The policy is the only
//! source of nondeterminism, so a run is a function of module and config.

use std::collections::BTreeMap;
use std::fmt;
use std::num::NonZeroU32;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::interp::{ConcurrentEvent, ProcState, ReceiveSite, Status, StepOutcome};
use crate::lang::{Module, Pid, Value};
use crate::races::happens_before;
use crate::sched::{Delivery, SchedError, SchedState};
use crate::tracemodel::{validate_input_log, Action, ActionBook, Ref, Tag, TraceDiagnostic};

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    RoundRobin,
    Random(u64),
}

/// How much a process may do before the policy picks again.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    /// Run until the next concurrent action, block or termination.
    Action,
    /// As `Action`, but also stop after this many reductions.
    Steps(NonZeroU32),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub entry: String,
    pub args: Vec<Value>,
    pub policy: Policy,
    pub input_log: ActionBook,
    pub max_steps: u64,
    pub granularity: Granularity,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            entry: "main".into(),
            args: Vec::new(),
            policy: Policy::RoundRobin,
            input_log: ActionBook::new(),
            max_steps: DEFAULT_MAX_STEPS,
            granularity: Granularity::Action,
        }
    }
}

impl RunConfig {
    pub fn with_log(input_log: ActionBook) -> Self {
        RunConfig { input_log, ..RunConfig::default() }
    }
}

/// Problems detected before the first step.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SetupError {
    #[error("entry function {0} is not defined")]
    UndefinedEntry(String),
    #[error("max_steps must be positive")]
    ZeroSteps,
    #[error("invalid input log:\n{}", render_diagnostics(.0))]
    InvalidLog(Vec<TraceDiagnostic>),
    #[error(transparent)]
    Sched(#[from] SchedError),
}

fn render_diagnostics(ds: &[TraceDiagnostic]) -> String {
    ds.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    Finished(String),
    Crashed(String),
    Blocked,
    /// Still runnable when the step limit was reached.
    Running,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Finished(v) => write!(f, "finished({v})"),
            Outcome::Crashed(r) => write!(f, "crashed({r})"),
            Outcome::Blocked => f.write_str("blocked"),
            Outcome::Running => f.write_str("running"),
        }
    }
}

pub type OutcomeMap = BTreeMap<Ref, Outcome>;

pub fn render_outcomes(outcomes: &OutcomeMap) -> String {
    outcomes.iter().map(|(r, o)| format!("{r}: {o}\n")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Deadlock { blocked: Vec<Ref> },
    Divergence(String),
    IncompleteReplay(String),
    StepLimit,
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        *self == RunStatus::Completed
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Completed => f.write_str("completed"),
            RunStatus::Deadlock { blocked } => {
                let names: Vec<&str> = blocked.iter().map(Ref::as_str).collect();
                write!(f, "deadlock: blocked in receive: {}", names.join(", "))
            }
            RunStatus::Divergence(report) => f.write_str(report),
            RunStatus::IncompleteReplay(report) => write!(f, "incomplete replay: {report}"),
            RunStatus::StepLimit => f.write_str("step limit reached"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: ActionBook,
    pub outcomes: OutcomeMap,
    pub status: RunStatus,
    /// Message contents by tag. Pids index `pid_refs`.
    pub messages: BTreeMap<Tag, Value>,
    /// The receive expression (and its environment) that consumed each tag.
    pub receive_sites: BTreeMap<Tag, ReceiveSite>,
    /// Reference of every pid, indexed by pid.
    pub pid_refs: Vec<Ref>,
    pub steps: u64,
}

impl RunResult {
    pub fn outcome_table(&self) -> String {
        render_outcomes(&self.outcomes)
    }
}

/// Picks which runnable process goes next.
#[derive(Debug, Clone)]
pub struct Chooser {
    policy: Policy,
    last: Option<usize>,
    rng: ChaCha8Rng,
}

impl Chooser {
    pub fn new(policy: Policy) -> Self {
        let seed = match policy {
            Policy::Random(seed) => seed,
            Policy::RoundRobin => 0,
        };
        Chooser { policy, last: None, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// `runnables` holds registration indices in increasing order.
    /// Round-robin takes the first one after the previous pick, wrapping.
    pub fn choose_next(&mut self, runnables: &[usize]) -> usize {
        assert!(!runnables.is_empty(), "choose_next needs a runnable process");
        let pick = match self.policy {
            Policy::RoundRobin => match self.last {
                Some(last) => runnables.iter().copied().find(|&i| i > last).unwrap_or(runnables[0]),
                None => runnables[0],
            },
            Policy::Random(_) => runnables[self.rng.gen_range(0..runnables.len())],
        };
        self.last = Some(pick);
        pick
    }
}

/// A run in progress. [`run`] drives it to the end; the exhaustive
/// interleaving search clones it at every choice point.
#[derive(Debug, Clone)]
pub struct Runtime<'m> {
    module: &'m Module,
    procs: Vec<ProcState<'m>>,
    sched: SchedState,
    granularity: Granularity,
    max_steps: u64,
    steps: u64,
    chooser: Chooser,
    failure: Option<SchedError>,
    messages: BTreeMap<Tag, Value>,
    receive_sites: BTreeMap<Tag, ReceiveSite>,
}

impl<'m> Runtime<'m> {
    pub fn new(module: &'m Module, cfg: &RunConfig) -> Result<Self, SetupError> {
        if cfg.max_steps == 0 {
            return Err(SetupError::ZeroSteps);
        }
        if module.function(&cfg.entry, cfg.args.len()).is_none() {
            return Err(SetupError::UndefinedEntry(format!("{}/{}", cfg.entry, cfg.args.len())));
        }
        validate_input_log(&cfg.input_log).map_err(SetupError::InvalidLog)?;
        let root = Pid(0);
        let sched = SchedState::init(root, &cfg.input_log)?;
        Ok(Runtime {
            module,
            procs: vec![ProcState::spawn(module, root, &cfg.entry, cfg.args.clone())],
            sched,
            granularity: cfg.granularity,
            max_steps: cfg.max_steps,
            steps: 0,
            chooser: Chooser::new(cfg.policy),
            failure: None,
            messages: BTreeMap::new(),
            receive_sites: BTreeMap::new(),
        })
    }

    /// Pids that may take a turn, in registration order. Empty once the run
    /// is over.
    pub fn runnable(&self) -> Vec<Pid> {
        if self.failure.is_some() || self.steps >= self.max_steps {
            return Vec::new();
        }
        self.procs.iter().filter(|p| p.is_runnable()).map(ProcState::pid).collect()
    }

    pub fn ref_of(&self, pid: Pid) -> &Ref {
        self.sched.ref_of(pid)
    }

    /// Lets the policy pick a process and runs one turn of it. Returns
    /// false when nothing is runnable.
    pub fn step_policy(&mut self) -> bool {
        let runnable: Vec<usize> = self.runnable().into_iter().map(Pid::index).collect();
        if runnable.is_empty() {
            return false;
        }
        let pick = self.chooser.choose_next(&runnable);
        self.turn(Pid(pick as u32));
        true
    }

    /// Runs `pid` until its turn ends (see [`Granularity`]).
    pub fn turn(&mut self, pid: Pid) {
        let mut taken = 0u32;
        while self.steps < self.max_steps && self.failure.is_none() {
            let outcome = self.procs[pid.index()].step();
            if outcome != StepOutcome::Blocked {
                self.steps += 1;
                taken += 1;
            }
            match outcome {
                StepOutcome::Progressed => {
                    if let Granularity::Steps(n) = self.granularity {
                        if taken >= n.get() {
                            return;
                        }
                    }
                }
                StepOutcome::Request(event) => {
                    self.handle(pid, event);
                    return;
                }
                StepOutcome::Finished(_) | StepOutcome::Crashed(_) | StepOutcome::Blocked => return,
            }
        }
    }

    fn handle(&mut self, pid: Pid, event: ConcurrentEvent) {
        let result = match event {
            ConcurrentEvent::SpawnReq { function, args } => {
                let child = Pid(self.procs.len() as u32);
                self.procs.push(ProcState::spawn(self.module, child, &function, args));
                let ds = self.sched.handle_spawn(pid, child);
                self.procs[pid.index()].resume(Value::Pid(child));
                ds
            }
            ConcurrentEvent::SendReq { target, value } => {
                let ds = self.sched.handle_send(pid, target, value.clone());
                if ds.is_ok() {
                    let sender = self.sched.ref_of(pid);
                    if let Some(Action::Send(tag)) = self.sched.proc_log(sender).and_then(|l| l.trace.last()) {
                        self.messages.insert(tag.clone(), value.clone());
                    }
                }
                self.procs[pid.index()].resume(value);
                ds
            }
            ConcurrentEvent::ReceiveDone { tag } => {
                if let Some(site) = self.procs[pid.index()].last_receive() {
                    self.receive_sites.insert(tag.clone(), site.clone());
                }
                self.sched.handle_receive(pid, &tag)
            }
        };
        match result {
            Ok(ds) => self.apply(ds),
            Err(e) => self.failure = Some(e),
        }
    }

    fn apply(&mut self, deliveries: Vec<Delivery>) {
        for d in deliveries {
            self.procs[d.target.index()].deliver(d.message);
        }
    }

    fn render_value(&self, v: &Value) -> String {
        v.render_with(&|p| self.sched.ref_of(p).to_string())
    }

    /// Summary of the state that determines all future behaviour, with pids
    /// replaced by references. Two runtimes with equal fingerprints have the
    /// same set of reachable outcomes.
    pub fn fingerprint(&self) -> String {
        let mut out = String::new();
        for p in &self.procs {
            let r = self.sched.ref_of(p.pid());
            let log = self.sched.proc_log(r).expect("registered");
            let status = match p.status() {
                Status::Runnable => "run".to_string(),
                Status::BlockedOnReceive => "blk".to_string(),
                Status::Finished(v) => format!("fin {}", self.render_value(v)),
                Status::Crashed(reason) => format!("crash {reason}"),
            };
            let trace: Vec<String> = log.trace.iter().map(Action::to_string).collect();
            let rest: Vec<String> = log.log_rest.iter().map(Action::to_string).collect();
            out.push_str(&format!(
                "{r}|{}|{status}|{}|{}\n",
                p.reductions(),
                trace.join(","),
                rest.join(",")
            ));
        }
        out.push_str(&format!("parked {}|steps>={}\n", self.sched.parked(), self.steps >= self.max_steps));
        out
    }

    pub fn finish(self) -> RunResult {
        let trace = self.sched.trace();
        let pid_refs: Vec<Ref> = self.procs.iter().map(|p| self.sched.ref_of(p.pid()).clone()).collect();
        let mut outcomes = OutcomeMap::new();
        let mut blocked = Vec::new();
        let mut running = false;
        for p in &self.procs {
            let r = self.sched.ref_of(p.pid()).clone();
            let o = match p.status() {
                Status::Finished(v) => Outcome::Finished(self.render_value(v)),
                Status::Crashed(reason) => Outcome::Crashed(reason.clone()),
                Status::BlockedOnReceive => {
                    blocked.push(r.clone());
                    Outcome::Blocked
                }
                Status::Runnable => {
                    running = true;
                    Outcome::Running
                }
            };
            outcomes.insert(r, o);
        }
        let leftover: Vec<(Ref, Vec<Action>)> = self
            .sched
            .leftover()
            .into_iter()
            .map(|(r, rest)| (r, rest.into_iter().filter(|a| !a.is_deliver()).collect::<Vec<_>>()))
            .filter(|(_, rest)| !rest.is_empty())
            .collect();
        let status = if let Some(e) = &self.failure {
            RunStatus::Divergence(e.to_string())
        } else if running {
            RunStatus::StepLimit
        } else if !leftover.is_empty() || self.sched.parked() > 0 {
            let mut parts: Vec<String> = leftover
                .iter()
                .map(|(r, rest)| {
                    let shown: Vec<String> = rest.iter().map(Action::to_string).collect();
                    format!("{r} still expects {}", shown.join(", "))
                })
                .collect();
            if self.sched.parked() > 0 {
                parts.push(format!("{} message(s) never delivered", self.sched.parked()));
            }
            RunStatus::IncompleteReplay(parts.join("; "))
        } else if !blocked.is_empty() {
            RunStatus::Deadlock { blocked }
        } else {
            RunStatus::Completed
        };
        RunResult {
            trace,
            outcomes,
            status,
            messages: self.messages,
            receive_sites: self.receive_sites,
            pid_refs,
            steps: self.steps,
        }
    }
}

pub fn run(module: &Module, cfg: &RunConfig) -> Result<RunResult, SetupError> {
    let mut rt = Runtime::new(module, cfg)?;
    while rt.step_policy() {}
    Ok(rt.finish())
}

/// Text sequence diagram: the lifelines, then one arrow per message in a
/// topological order of happens-before.
pub fn render_sequence_diagram(t: &ActionBook) -> Result<String, crate::races::HbError> {
    let hb = happens_before(t)?;
    let mut out = String::new();
    let names: Vec<&str> = t.refs().map(Ref::as_str).collect();
    out.push_str(&format!("lifelines: {}\n", names.join(" ")));
    let mut delivered_at: BTreeMap<&Tag, &Ref> = BTreeMap::new();
    for (r, seq) in t.iter() {
        for a in seq {
            if let Action::Deliver(tag) = a {
                delivered_at.insert(tag, r);
            }
        }
    }
    for id in hb.topological_order() {
        let e = hb.event(id);
        if let Action::Send(tag) = &e.action {
            match delivered_at.get(tag) {
                Some(target) => out.push_str(&format!("send@{} --{tag}--> deliver@{target}\n", e.process)),
                None => out.push_str(&format!("send@{} --{tag}--> (undelivered)\n", e.process)),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_module;

    #[test]
    fn round_robin_cycles() {
        let mut c = Chooser::new(Policy::RoundRobin);
        let picks: Vec<usize> = (0..4).map(|_| c.choose_next(&[0, 1, 2])).collect();
        assert_eq!(picks, [0, 1, 2, 0]);
    }

    #[test]
    fn round_robin_skips_missing() {
        let mut c = Chooser::new(Policy::RoundRobin);
        assert_eq!(c.choose_next(&[0, 1, 2]), 0);
        assert_eq!(c.choose_next(&[0, 2]), 2);
        assert_eq!(c.choose_next(&[1, 2]), 1);
    }

    #[test]
    fn singleton_under_any_policy() {
        for policy in [Policy::RoundRobin, Policy::Random(3)] {
            assert_eq!(Chooser::new(policy).choose_next(&[4]), 4);
        }
    }

    #[test]
    fn random_is_seeded() {
        let picks = |seed| {
            let mut c = Chooser::new(Policy::Random(seed));
            (0..20).map(|_| c.choose_next(&[0, 1, 2, 3])).collect::<Vec<_>>()
        };
        assert_eq!(picks(7), picks(7));
        assert_ne!(picks(7), picks(8));
    }

    #[test]
    fn trivial_program() {
        let m = parse_module("main() -> 42.").unwrap();
        let res = run(&m, &RunConfig::default()).unwrap();
        assert_eq!(res.status, RunStatus::Completed);
        assert_eq!(res.trace.to_string(), "");
        assert!(res.trace.contains(&Ref::new("p1").unwrap()));
        assert_eq!(res.outcome_table(), "p1: finished(42)\n");
    }

    #[test]
    fn step_limit_is_a_status() {
        let m = parse_module("main() -> loop(0).\nloop(N) -> loop(N + 1).").unwrap();
        let cfg = RunConfig { max_steps: 500, ..RunConfig::default() };
        let res = run(&m, &cfg).unwrap();
        assert_eq!(res.status, RunStatus::StepLimit);
        assert_eq!(res.steps, 500);
        assert_eq!(res.outcome_table(), "p1: running\n");
    }

    #[test]
    fn deadlock_is_detected() {
        let m = parse_module("main() -> receive never -> ok end.").unwrap();
        let res = run(&m, &RunConfig::default()).unwrap();
        assert_eq!(res.status, RunStatus::Deadlock { blocked: vec![Ref::new("p1").unwrap()] });
    }

    #[test]
    fn crash_is_isolated() {
        let m = parse_module("main() -> spawn(bad, []), 1.\nbad() -> 1 + a.").unwrap();
        let res = run(&m, &RunConfig::default()).unwrap();
        assert_eq!(res.status, RunStatus::Completed);
        assert_eq!(res.outcomes[&Ref::new("p1").unwrap()], Outcome::Finished("1".into()));
        assert!(matches!(res.outcomes[&Ref::new("p1.1").unwrap()], Outcome::Crashed(_)));
    }

    #[test]
    fn pids_in_outcomes_render_as_refs() {
        let m = parse_module("main() -> {self(), spawn(w, [])}.\nw() -> ok.").unwrap();
        let res = run(&m, &RunConfig::default()).unwrap();
        assert_eq!(res.outcomes[&Ref::new("p1").unwrap()], Outcome::Finished("{p1,p1.1}".into()));
    }

    #[test]
    fn undefined_entry_is_a_setup_error() {
        let m = parse_module("start() -> 1.").unwrap();
        assert_eq!(
            run(&m, &RunConfig::default()).unwrap_err(),
            SetupError::UndefinedEntry("main/0".into())
        );
    }

    #[test]
    fn steps_granularity_interleaves_more_often() {
        let src = "main() -> spawn(w, [self()]), receive X -> X end.\nw(P) -> P ! 1 + 2 + 3.";
        let m = parse_module(src).unwrap();
        let coarse = run(&m, &RunConfig::default()).unwrap();
        let cfg = RunConfig { granularity: Granularity::Steps(NonZeroU32::new(1).unwrap()), ..RunConfig::default() };
        let fine = run(&m, &cfg).unwrap();
        assert_eq!(coarse.outcomes, fine.outcomes);
        assert_eq!(coarse.trace, fine.trace);
    }

    #[test]
    fn diagram_of_empty_trace() {
        let mut t = ActionBook::new();
        t.touch(&Ref::new("p1").unwrap());
        assert_eq!(render_sequence_diagram(&t).unwrap(), "lifelines: p1\n");
    }
}
