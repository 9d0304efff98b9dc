//! Actions, logs and traces.
//!
//! A trace is a collection of per-process action sequences; only the order
//! inside one sequence carries meaning. A log is a trace without `deliver`
//! actions. Both share one line-oriented text format:
//!
//! ```text
//! # comment
//! p1 spawn(p3)
//! p1 send(l1)
//! p3 deliver(l1)
//! p3 receive(l1)
//! ```

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | ':' | '-'))
}

/// Stable, execution-independent process reference.
///
/// References sort in natural order, so `p1.2` comes before `p1.10`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ref(String);

impl Ref {
    pub fn new(s: impl Into<String>) -> Result<Ref, FormatError> {
        let s = s.into();
        if valid_name(&s) {
            Ok(Ref(s))
        } else {
            Err(FormatError { line: 0, message: format!("invalid process reference {s:?}") })
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Ref {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Ord for Ref {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(&self.0, &other.0).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Ref {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Compares digit runs numerically and everything else bytewise.
fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (a, b) = (a.as_bytes(), b.as_bytes());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i].is_ascii_digit() && b[j].is_ascii_digit() {
            let si = i;
            while i < a.len() && a[i].is_ascii_digit() {
                i += 1;
            }
            let sj = j;
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            let da = trim_zeros(&a[si..i]);
            let db = trim_zeros(&b[sj..j]);
            let ord = da.len().cmp(&db.len()).then_with(|| da.cmp(db));
            if ord != Ordering::Equal {
                return ord;
            }
        } else {
            match a[i].cmp(&b[j]) {
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
                ord => return ord,
            }
        }
    }
    (a.len() - i).cmp(&(b.len() - j))
}

fn trim_zeros(digits: &[u8]) -> &[u8] {
    let first = digits.iter().position(|&d| d != b'0').unwrap_or(digits.len());
    &digits[first..]
}

/// Unique message tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag(String);

impl Tag {
    pub fn new(s: impl Into<String>) -> Result<Tag, FormatError> {
        let s = s.into();
        if valid_name(&s) {
            Ok(Tag(s))
        } else {
            Err(FormatError { line: 0, message: format!("invalid message tag {s:?}") })
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Spawn(Ref),
    Send(Tag),
    Deliver(Tag),
    Receive(Tag),
}

impl Action {
    pub fn tag(&self) -> Option<&Tag> {
        match self {
            Action::Spawn(_) => None,
            Action::Send(t) | Action::Deliver(t) | Action::Receive(t) => Some(t),
        }
    }

    pub fn is_deliver(&self) -> bool {
        matches!(self, Action::Deliver(_))
    }

    fn name(&self) -> &'static str {
        match self {
            Action::Spawn(_) => "spawn",
            Action::Send(_) => "send",
            Action::Deliver(_) => "deliver",
            Action::Receive(_) => "receive",
        }
    }

    fn argument(&self) -> &str {
        match self {
            Action::Spawn(r) => r.as_str(),
            Action::Send(t) | Action::Deliver(t) | Action::Receive(t) => t.as_str(),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name(), self.argument())
    }
}

/// Per-process action sequences: a log when it holds no delivers, a trace
/// otherwise.
///
/// A process with an empty sequence and an absent process are the same
/// thing: equality ignores empty sequences.
#[derive(Debug, Clone, Default)]
pub struct ActionBook {
    entries: BTreeMap<Ref, Vec<Action>>,
}

impl PartialEq for ActionBook {
    fn eq(&self, other: &Self) -> bool {
        let nonempty = |b: &ActionBook| {
            b.entries
                .iter()
                .filter(|(_, seq)| !seq.is_empty())
                .map(|(r, s)| (r.clone(), s.clone()))
                .collect::<Vec<_>>()
        };
        nonempty(self) == nonempty(other)
    }
}

impl Eq for ActionBook {}

impl ActionBook {
    pub fn new() -> ActionBook {
        ActionBook::default()
    }

    pub fn push(&mut self, r: &Ref, a: Action) {
        self.entries.entry(r.clone()).or_default().push(a);
    }

    /// Ensures `r` has an entry, possibly empty.
    pub fn touch(&mut self, r: &Ref) {
        self.entries.entry(r.clone()).or_default();
    }

    pub fn insert(&mut self, r: Ref, seq: Vec<Action>) {
        self.entries.insert(r, seq);
    }

    pub fn get(&self, r: &Ref) -> &[Action] {
        self.entries.get(r).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, r: &Ref) -> bool {
        self.entries.contains_key(r)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Ref, &[Action])> {
        self.entries.iter().map(|(r, s)| (r, s.as_slice()))
    }

    pub fn refs(&self) -> impl Iterator<Item = &Ref> {
        self.entries.keys()
    }

    /// True when no process has any action.
    pub fn is_empty(&self) -> bool {
        self.entries.values().all(Vec::is_empty)
    }

    pub fn action_count(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    /// Drops processes whose sequence is empty.
    pub fn pruned(mut self) -> ActionBook {
        self.entries.retain(|_, s| !s.is_empty());
        self
    }

    /// Finds the process and position holding `action`.
    pub fn locate(&self, action: &Action) -> Option<(&Ref, usize)> {
        self.entries
            .iter()
            .find_map(|(r, seq)| seq.iter().position(|a| a == action).map(|i| (r, i)))
    }
}

impl FromIterator<(Ref, Vec<Action>)> for ActionBook {
    fn from_iter<I: IntoIterator<Item = (Ref, Vec<Action>)>>(iter: I) -> Self {
        let mut book = ActionBook::new();
        for (r, seq) in iter {
            book.entries.entry(r).or_default().extend(seq);
        }
        book
    }
}

impl fmt::Display for ActionBook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_actions(self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

pub fn parse_action(text: &str) -> Result<Action, FormatError> {
    let err = |message: String| FormatError { line: 0, message };
    let open = text.find('(').ok_or_else(|| err(format!("malformed action {text:?}")))?;
    if !text.ends_with(')') {
        return Err(err(format!("malformed action {text:?}")));
    }
    let (name, arg) = (&text[..open], &text[open + 1..text.len() - 1]);
    if arg.is_empty() {
        return Err(err(format!("empty argument in {text:?}")));
    }
    Ok(match name {
        "spawn" => Action::Spawn(Ref::new(arg)?),
        "send" => Action::Send(Tag::new(arg)?),
        "deliver" => Action::Deliver(Tag::new(arg)?),
        "receive" => Action::Receive(Tag::new(arg)?),
        other => return Err(err(format!("unknown action {other:?}"))),
    })
}

pub fn parse_actions(text: &str) -> Result<ActionBook, FormatError> {
    let mut book = ActionBook::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let at_line = |mut e: FormatError| {
            e.line = line_no;
            e
        };
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (r, action) = line.split_once(' ').ok_or_else(|| FormatError {
            line: line_no,
            message: format!("expected `<ref> <action>`, found {line:?}"),
        })?;
        let r = Ref::new(r).map_err(at_line)?;
        let action = parse_action(action).map_err(at_line)?;
        book.push(&r, action);
    }
    Ok(book)
}

/// Canonical text: processes in reference order, one action per line.
pub fn render_actions(book: &ActionBook) -> String {
    let mut out = String::new();
    for (r, seq) in book.iter() {
        for a in seq {
            out.push_str(r.as_str());
            out.push(' ');
            out.push_str(&a.to_string());
            out.push('\n');
        }
    }
    out
}

/// Drops every deliver action, keeping everything else in order.
pub fn log_projection(trace: &ActionBook) -> ActionBook {
    let mut log = ActionBook::new();
    for (r, seq) in trace.iter() {
        log.insert(r.clone(), seq.iter().filter(|a| !a.is_deliver()).cloned().collect());
    }
    log
}

/// A problem found in a log or trace, located by process and position when
/// that makes sense.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceDiagnostic {
    pub process: Option<Ref>,
    pub index: Option<usize>,
    pub message: String,
}

impl TraceDiagnostic {
    fn at(r: &Ref, index: usize, message: impl Into<String>) -> Self {
        TraceDiagnostic { process: Some(r.clone()), index: Some(index), message: message.into() }
    }

    fn global(message: impl Into<String>) -> Self {
        TraceDiagnostic { process: None, index: None, message: message.into() }
    }
}

impl fmt::Display for TraceDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.process, self.index) {
            (Some(r), Some(i)) => write!(f, "{r} (action {}): {}", i + 1, self.message),
            (Some(r), None) => write!(f, "{r}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

/// Where each kind of event for a tag lives: (process, position).
#[derive(Default)]
struct TagSites<'a> {
    sends: Vec<(&'a Ref, usize)>,
    delivers: Vec<(&'a Ref, usize)>,
    receives: Vec<(&'a Ref, usize)>,
}

fn tag_sites(book: &ActionBook) -> BTreeMap<&Tag, TagSites<'_>> {
    let mut sites: BTreeMap<&Tag, TagSites<'_>> = BTreeMap::new();
    for (r, seq) in book.iter() {
        for (i, a) in seq.iter().enumerate() {
            match a {
                Action::Spawn(_) => {}
                Action::Send(t) => sites.entry(t).or_default().sends.push((r, i)),
                Action::Deliver(t) => sites.entry(t).or_default().delivers.push((r, i)),
                Action::Receive(t) => sites.entry(t).or_default().receives.push((r, i)),
            }
        }
    }
    sites
}

fn check_names(book: &ActionBook, diags: &mut Vec<TraceDiagnostic>) {
    for (r, seq) in book.iter() {
        if !valid_name(r.as_str()) {
            diags.push(TraceDiagnostic::at(r, 0, "invalid process reference"));
        }
        for (i, a) in seq.iter().enumerate() {
            if !valid_name(a.argument()) {
                diags.push(TraceDiagnostic::at(r, i, format!("invalid name in {a}")));
            }
        }
    }
}

fn check_spawns(book: &ActionBook, diags: &mut Vec<TraceDiagnostic>) {
    let mut spawned: BTreeSet<&Ref> = BTreeSet::new();
    for (r, seq) in book.iter() {
        for (i, a) in seq.iter().enumerate() {
            if let Action::Spawn(child) = a {
                if child == r {
                    diags.push(TraceDiagnostic::at(r, i, "process spawns itself"));
                }
                if !spawned.insert(child) {
                    diags.push(TraceDiagnostic::at(r, i, format!("duplicate spawn of {child}")));
                }
            }
        }
    }
}

/// Checks a book meant as replay input.
pub fn validate_input_log(book: &ActionBook) -> Result<(), Vec<TraceDiagnostic>> {
    let mut diags = Vec::new();
    check_names(book, &mut diags);
    check_spawns(book, &mut diags);

    for (r, seq) in book.iter() {
        for (i, a) in seq.iter().enumerate() {
            if a.is_deliver() {
                diags.push(TraceDiagnostic::at(r, i, "deliver not allowed in input log"));
            }
        }
    }

    for (tag, sites) in tag_sites(book) {
        if let [_, extra @ ..] = sites.sends.as_slice() {
            for (r, i) in extra {
                diags.push(TraceDiagnostic::at(r, *i, format!("duplicate send tag {tag}")));
            }
        }
        if let [_, extra @ ..] = sites.receives.as_slice() {
            for (r, i) in extra {
                diags.push(TraceDiagnostic::at(r, *i, format!("duplicate receive tag {tag}")));
            }
        }
        if sites.sends.is_empty() {
            for (r, i) in &sites.receives {
                diags.push(TraceDiagnostic::at(r, *i, format!("received tag {tag} is never sent")));
            }
        }
        // Generated tags are `<sender>:<n>`; a send from another process
        // means the log was stitched together inconsistently.
        if let (Some((sender, i)), Some((owner, n))) = (sites.sends.first(), tag.as_str().rsplit_once(':')) {
            let generated = !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit());
            if generated && book.contains(&Ref(owner.to_string())) && owner != sender.as_str() {
                diags.push(TraceDiagnostic::at(
                    sender,
                    *i,
                    format!("tag {tag} names sender {owner} but is sent by {sender}"),
                ));
            }
        }
    }

    if diags.is_empty() {
        Ok(())
    } else {
        Err(diags)
    }
}

/// Checks the structural invariants every produced trace satisfies.
pub fn check_well_formed_trace(book: &ActionBook) -> Result<(), Vec<TraceDiagnostic>> {
    let mut diags = Vec::new();
    check_names(book, &mut diags);
    check_spawns(book, &mut diags);

    let sites = tag_sites(book);
    for (tag, s) in &sites {
        match s.sends.len() {
            1 => {}
            0 => diags.push(TraceDiagnostic::global(format!("tag {tag} has no send"))),
            n => diags.push(TraceDiagnostic::global(format!("tag {tag} is sent {n} times"))),
        }
        if s.delivers.len() > 1 {
            diags.push(TraceDiagnostic::global(format!("tag {tag} is delivered {} times", s.delivers.len())));
        }
        if s.receives.len() > 1 {
            diags.push(TraceDiagnostic::global(format!("tag {tag} is received {} times", s.receives.len())));
        }
        for &(r, i) in &s.receives {
            let delivered_before = s.delivers.iter().any(|&(dr, di)| dr == r && di < i);
            if !delivered_before {
                diags.push(TraceDiagnostic::at(r, i, format!("receive({tag}) without an earlier deliver({tag})")));
            }
        }
    }

    // Per-sender FIFO: messages between one pair of processes are
    // delivered in the order they were sent.
    let mut channels: BTreeMap<(&Ref, &Ref), Vec<(usize, usize, &Tag)>> = BTreeMap::new();
    for (tag, s) in &sites {
        if let (Some(&(sender, si)), Some(&(target, di))) = (s.sends.first(), s.delivers.first()) {
            channels.entry((sender, target)).or_default().push((si, di, tag));
        }
    }
    for ((sender, target), mut msgs) in channels {
        msgs.sort();
        for pair in msgs.windows(2) {
            if pair[0].1 > pair[1].1 {
                diags.push(TraceDiagnostic::global(format!(
                    "FIFO violated from {sender} to {target}: {} sent before {} but delivered after it",
                    pair[0].2, pair[1].2
                )));
            }
        }
    }

    if diags.is_empty() {
        Ok(())
    } else {
        Err(diags)
    }
}
