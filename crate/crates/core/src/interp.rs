//! Small-step evaluator for a single process.
//!
//! The evaluator is a CEK-style machine: a control (an expression to
//! evaluate or a value to return), an environment, and an explicit stack of
//! continuation frames. Every call to [`ProcState::step`] performs one
//! reduction. Concurrent actions are never completed here; `spawn` and `!`
//! surface as requests that the runtime answers with [`ProcState::resume`],
//! and a successful `receive` reports the tag it consumed.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use crate::lang::{BinOp, Clause, Expr, Module, Pattern, Pid, Value};
use crate::tracemodel::{Ref, Tag};

pub type Env = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TaggedMessage {
    pub tag: Tag,
    pub value: Value,
    pub sender: Ref,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Runnable,
    BlockedOnReceive,
    Finished(Value),
    Crashed(String),
}

/// One of the three instrumented actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConcurrentEvent {
    SpawnReq { function: String, args: Vec<Value> },
    SendReq { target: Pid, value: Value },
    ReceiveDone { tag: Tag },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Progressed,
    Finished(Value),
    Crashed(String),
    Blocked,
    Request(ConcurrentEvent),
}

/// Binds the variables of `p` against `v` on top of `env`.
///
/// A variable that is already bound acts as an equality test, as in Erlang.
pub fn match_pattern(p: &Pattern, v: &Value, env: &Env) -> Option<Env> {
    let mut out = env.clone();
    bind(p, v, &mut out).then_some(out)
}

fn bind(p: &Pattern, v: &Value, env: &mut Env) -> bool {
    match (p, v) {
        (Pattern::Wildcard, _) => true,
        (Pattern::Var(name), _) => match env.get(name) {
            Some(bound) => bound == v,
            None => {
                env.insert(name.clone(), v.clone());
                true
            }
        },
        (Pattern::Int(a), Value::Int(b)) => a == b,
        (Pattern::Atom(a), Value::Atom(b)) => a == b,
        (Pattern::Tuple(ps), Value::Tuple(vs)) => {
            ps.len() == vs.len() && ps.iter().zip(vs).all(|(p, v)| bind(p, v, env))
        }
        (Pattern::Nil, Value::Nil) => true,
        (Pattern::Cons(ph, pt), Value::Cons(vh, vt)) => bind(ph, vh, env) && bind(pt, vt, env),
        _ => false,
    }
}

/// Selective receive: the oldest message matching any clause wins; for
/// each message the clauses are tried in order.
///
/// Returns the mailbox position, the clause index and the extended
/// environment.
pub fn select_message<'a, I>(mailbox: I, clauses: &[Clause], env: &Env) -> Option<(usize, usize, Env)>
where
    I: IntoIterator<Item = &'a TaggedMessage>,
{
    mailbox.into_iter().enumerate().find_map(|(pos, msg)| {
        clauses
            .iter()
            .enumerate()
            .find_map(|(ci, c)| match_pattern(&c.pattern, &msg.value, env).map(|e| (pos, ci, e)))
    })
}

#[derive(Debug, Clone)]
enum Control<'m> {
    Eval(&'m Expr),
    Return(Value),
    /// Waiting for the runtime to answer a spawn or send request.
    Pending,
    Fail(String),
    Done,
}

#[derive(Debug, Clone)]
enum Frame<'m> {
    Tuple { done: Vec<Value>, rest: &'m [Expr] },
    ConsTail(&'m Expr),
    ConsBuild(Value),
    BinLeft(BinOp, &'m Expr),
    BinRight(BinOp, Value),
    Bind(&'m Pattern),
    Seq(&'m Expr),
    Args { kind: ArgsKind, name: &'m str, done: Vec<Value>, rest: &'m [Expr] },
    SendMessage(&'m Expr),
    SendTo(Pid),
    Case(&'m [Clause]),
    Return(Env),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArgsKind {
    Call,
    Spawn,
}

/// The receive a process last completed: where it was and what it could
/// have accepted.
#[derive(Debug, Clone)]
pub struct ReceiveSite {
    pub clauses: Vec<Clause>,
    pub env: Env,
}

impl ReceiveSite {
    pub fn accepts(&self, value: &Value) -> bool {
        self.clauses.iter().any(|c| match_pattern(&c.pattern, value, &self.env).is_some())
    }
}

#[derive(Debug, Clone)]
pub struct ProcState<'m> {
    pid: Pid,
    module: &'m Module,
    control: Control<'m>,
    frames: Vec<Frame<'m>>,
    env: Env,
    mailbox: VecDeque<TaggedMessage>,
    status: Status,
    reductions: u64,
    last_receive: Option<ReceiveSite>,
}

impl<'m> ProcState<'m> {
    /// A process that will evaluate `function(args)`. An unknown function
    /// is not an error here; the process crashes on its first step.
    pub fn spawn(module: &'m Module, pid: Pid, function: &str, args: Vec<Value>) -> Self {
        let (control, env) = match module.function(function, args.len()) {
            Some(def) => (Control::Eval(&def.body), def.params.iter().cloned().zip(args).collect()),
            None => (Control::Fail(format!("undef: {function}/{}", args.len())), Env::new()),
        };
        ProcState {
            pid,
            module,
            control,
            frames: Vec::new(),
            env,
            mailbox: VecDeque::new(),
            status: Status::Runnable,
            reductions: 0,
            last_receive: None,
        }
    }

    pub fn pid(&self) -> Pid {
        self.pid
    }

    pub fn status(&self) -> &Status {
        &self.status
    }

    pub fn mailbox(&self) -> &VecDeque<TaggedMessage> {
        &self.mailbox
    }

    pub fn reductions(&self) -> u64 {
        self.reductions
    }

    pub fn is_runnable(&self) -> bool {
        self.status == Status::Runnable
    }

    pub fn last_receive(&self) -> Option<&ReceiveSite> {
        self.last_receive.as_ref()
    }

    /// Appends a delivered message. A blocked process becomes runnable when
    /// the message gives its pending receive something to select.
    pub fn deliver(&mut self, msg: TaggedMessage) {
        self.mailbox.push_back(msg);
        if self.status == Status::BlockedOnReceive {
            if let Control::Eval(Expr::Receive(clauses)) = self.control {
                if select_message(self.mailbox.iter(), clauses, &self.env).is_some() {
                    self.status = Status::Runnable;
                }
            }
        }
    }

    /// Answers a pending spawn (with the child pid) or send (with the sent
    /// value).
    pub fn resume(&mut self, answer: Value) {
        debug_assert!(matches!(self.control, Control::Pending), "resume without a pending request");
        self.control = Control::Return(answer);
    }

    fn crash(&mut self, reason: String) -> StepOutcome {
        self.control = Control::Done;
        self.frames.clear();
        self.status = Status::Crashed(reason.clone());
        StepOutcome::Crashed(reason)
    }

    /// Performs exactly one reduction.
    pub fn step(&mut self) -> StepOutcome {
        if self.status != Status::Runnable {
            return match &self.status {
                Status::BlockedOnReceive => StepOutcome::Blocked,
                Status::Finished(v) => StepOutcome::Finished(v.clone()),
                Status::Crashed(r) => StepOutcome::Crashed(r.clone()),
                Status::Runnable => unreachable!(),
            };
        }
        self.reductions += 1;
        match std::mem::replace(&mut self.control, Control::Pending) {
            Control::Eval(e) => self.eval(e),
            Control::Return(v) => self.apply(v),
            Control::Fail(reason) => self.crash(reason),
            Control::Pending => self.crash("internal: stepped while a request was pending".into()),
            Control::Done => self.crash("internal: stepped a terminated process".into()),
        }
    }

    fn value(&mut self, v: Value) -> StepOutcome {
        self.control = Control::Return(v);
        StepOutcome::Progressed
    }

    fn eval(&mut self, e: &'m Expr) -> StepOutcome {
        match e {
            Expr::Int(n) => self.value(Value::Int(*n)),
            Expr::Atom(a) => self.value(Value::Atom(a.clone())),
            Expr::Var(v) => match self.env.get(v) {
                Some(val) => self.value(val.clone()),
                None => self.crash(format!("unbound: {v}")),
            },
            Expr::Nil => self.value(Value::Nil),
            Expr::SelfPid => self.value(Value::Pid(self.pid)),
            Expr::Tuple(items) => match items.split_first() {
                None => self.value(Value::Tuple(Vec::new())),
                Some((first, rest)) => {
                    self.frames.push(Frame::Tuple { done: Vec::with_capacity(items.len()), rest });
                    self.control = Control::Eval(first);
                    StepOutcome::Progressed
                }
            },
            Expr::Cons(h, t) => self.push_eval(Frame::ConsTail(t), h),
            Expr::BinOp(op, l, r) => self.push_eval(Frame::BinLeft(*op, r), l),
            Expr::Bind(p, rhs) => self.push_eval(Frame::Bind(p), rhs),
            Expr::Seq(first, rest) => self.push_eval(Frame::Seq(rest), first),
            Expr::Send(target, msg) => self.push_eval(Frame::SendMessage(msg), target),
            Expr::Case(scrutinee, clauses) => self.push_eval(Frame::Case(clauses), scrutinee),
            Expr::Call(name, args) => self.start_args(ArgsKind::Call, name, args),
            Expr::Spawn(name, args) => self.start_args(ArgsKind::Spawn, name, args),
            Expr::Receive(clauses) => match select_message(self.mailbox.iter(), clauses, &self.env) {
                Some((pos, ci, env)) => {
                    let msg = self.mailbox.remove(pos).expect("selected position exists");
                    self.last_receive = Some(ReceiveSite { clauses: clauses.clone(), env: self.env.clone() });
                    self.env = env;
                    self.control = Control::Eval(&clauses[ci].body);
                    StepOutcome::Request(ConcurrentEvent::ReceiveDone { tag: msg.tag })
                }
                None => {
                    self.reductions -= 1;
                    self.control = Control::Eval(e);
                    self.status = Status::BlockedOnReceive;
                    StepOutcome::Blocked
                }
            },
        }
    }

    fn push_eval(&mut self, frame: Frame<'m>, next: &'m Expr) -> StepOutcome {
        self.frames.push(frame);
        self.control = Control::Eval(next);
        StepOutcome::Progressed
    }

    fn start_args(&mut self, kind: ArgsKind, name: &'m str, args: &'m [Expr]) -> StepOutcome {
        match args.split_first() {
            None => self.complete_args(kind, name, Vec::new()),
            Some((first, rest)) => {
                self.frames.push(Frame::Args { kind, name, done: Vec::with_capacity(args.len()), rest });
                self.control = Control::Eval(first);
                StepOutcome::Progressed
            }
        }
    }

    fn complete_args(&mut self, kind: ArgsKind, name: &'m str, args: Vec<Value>) -> StepOutcome {
        match kind {
            ArgsKind::Spawn => {
                self.control = Control::Pending;
                StepOutcome::Request(ConcurrentEvent::SpawnReq { function: name.to_string(), args })
            }
            ArgsKind::Call => {
                let Some(def) = self.module.function(name, args.len()) else {
                    return self.crash(format!("undef: {name}/{}", args.len()));
                };
                let callee_env: Env = def.params.iter().cloned().zip(args).collect();
                let caller_env = std::mem::replace(&mut self.env, callee_env);
                // Tail call: the pending Return frame already restores the
                // right environment.
                if !matches!(self.frames.last(), Some(Frame::Return(_))) {
                    self.frames.push(Frame::Return(caller_env));
                }
                self.control = Control::Eval(&def.body);
                StepOutcome::Progressed
            }
        }
    }

    fn apply(&mut self, v: Value) -> StepOutcome {
        let Some(frame) = self.frames.pop() else {
            self.control = Control::Done;
            self.status = Status::Finished(v.clone());
            return StepOutcome::Finished(v);
        };
        match frame {
            Frame::Tuple { mut done, rest } => {
                done.push(v);
                match rest.split_first() {
                    None => self.value(Value::Tuple(done)),
                    Some((next, rest)) => {
                        self.frames.push(Frame::Tuple { done, rest });
                        self.control = Control::Eval(next);
                        StepOutcome::Progressed
                    }
                }
            }
            Frame::ConsTail(t) => self.push_eval(Frame::ConsBuild(v), t),
            Frame::ConsBuild(head) => self.value(Value::Cons(Arc::new(head), Arc::new(v))),
            Frame::BinLeft(op, r) => self.push_eval(Frame::BinRight(op, v), r),
            Frame::BinRight(op, l) => match binop(op, &l, &v) {
                Ok(result) => self.value(result),
                Err(reason) => self.crash(reason),
            },
            Frame::Bind(p) => match match_pattern(p, &v, &self.env) {
                Some(env) => {
                    self.env = env;
                    self.value(v)
                }
                None => self.crash(format!("badmatch: {v}")),
            },
            Frame::Seq(rest) => {
                self.control = Control::Eval(rest);
                StepOutcome::Progressed
            }
            Frame::Args { kind, name, mut done, rest } => {
                done.push(v);
                match rest.split_first() {
                    None => self.complete_args(kind, name, done),
                    Some((next, rest)) => {
                        self.frames.push(Frame::Args { kind, name, done, rest });
                        self.control = Control::Eval(next);
                        StepOutcome::Progressed
                    }
                }
            }
            Frame::SendMessage(msg) => match v {
                Value::Pid(target) => self.push_eval(Frame::SendTo(target), msg),
                other => self.crash(format!("badarg: send to non-pid {other}")),
            },
            Frame::SendTo(target) => {
                self.control = Control::Pending;
                StepOutcome::Request(ConcurrentEvent::SendReq { target, value: v })
            }
            Frame::Case(clauses) => {
                let chosen = clauses
                    .iter()
                    .find_map(|c| match_pattern(&c.pattern, &v, &self.env).map(|env| (c, env)));
                match chosen {
                    Some((clause, env)) => {
                        self.env = env;
                        self.control = Control::Eval(&clause.body);
                        StepOutcome::Progressed
                    }
                    None => self.crash(format!("case_clause: {v}")),
                }
            }
            Frame::Return(env) => {
                self.env = env;
                self.value(v)
            }
        }
    }
}

fn binop(op: BinOp, l: &Value, r: &Value) -> Result<Value, String> {
    match op {
        BinOp::Eq => return Ok(Value::boolean(l == r)),
        BinOp::Ne => return Ok(Value::boolean(l != r)),
        _ => {}
    }
    let (Value::Int(a), Value::Int(b)) = (l, r) else {
        return Err(format!("badarith: {l} {} {r}", op.symbol()));
    };
    let overflow = || format!("badarith: overflow in {a} {} {b}", op.symbol());
    Ok(match op {
        BinOp::Add => Value::Int(a.checked_add(*b).ok_or_else(overflow)?),
        BinOp::Sub => Value::Int(a.checked_sub(*b).ok_or_else(overflow)?),
        BinOp::Mul => Value::Int(a.checked_mul(*b).ok_or_else(overflow)?),
        BinOp::Lt => Value::boolean(a < b),
        BinOp::Le => Value::boolean(a <= b),
        BinOp::Eq | BinOp::Ne => unreachable!(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_expr, parse_module};

    fn pat(src: &str) -> Pattern {
        match parse_expr(&format!("case 0 of {src} -> 0 end")).unwrap() {
            Expr::Case(_, clauses) => clauses[0].pattern.clone(),
            _ => unreachable!(),
        }
    }

    fn clauses(src: &str) -> Vec<Clause> {
        match parse_expr(src).unwrap() {
            Expr::Receive(cs) => cs,
            _ => panic!("not a receive"),
        }
    }

    fn msg(tag: &str, value: Value) -> TaggedMessage {
        TaggedMessage { tag: Tag::new(tag).unwrap(), value, sender: Ref::new("p0").unwrap() }
    }

    fn run_to_end(ps: &mut ProcState<'_>) -> StepOutcome {
        loop {
            match ps.step() {
                StepOutcome::Progressed => continue,
                other => return other,
            }
        }
    }

    #[test]
    fn match_binds_pattern_variables() {
        let env = match_pattern(
            &pat("{init, P}"),
            &Value::Tuple(vec![Value::atom("init"), Value::Pid(Pid(7))]),
            &Env::new(),
        )
        .unwrap();
        assert_eq!(env, Env::from([("P".to_string(), Value::Pid(Pid(7)))]));
    }

    #[test]
    fn match_integer_mismatch() {
        assert!(match_pattern(&pat("42"), &Value::Int(43), &Env::new()).is_none());
    }

    #[test]
    fn match_list_head_and_tail() {
        let v = Value::list([Value::Int(1), Value::Int(2), Value::Int(3)]);
        let env = match_pattern(&pat("[H|T]"), &v, &Env::new()).unwrap();
        assert_eq!(env["H"], Value::Int(1));
        assert_eq!(env["T"], Value::list([Value::Int(2), Value::Int(3)]));
    }

    #[test]
    fn bound_variable_in_pattern_tests_equality() {
        let env = Env::from([("X".to_string(), Value::Int(1))]);
        assert!(match_pattern(&pat("{X, Y}"), &Value::Tuple(vec![Value::Int(1), Value::Int(2)]), &env).is_some());
        assert!(match_pattern(&pat("{X, Y}"), &Value::Tuple(vec![Value::Int(2), Value::Int(2)]), &env).is_none());
    }

    #[test]
    fn selective_receive_skips_nonmatching() {
        let mbox = [msg("l5", Value::Tuple(vec![Value::atom("ping")]))];
        assert!(select_message(mbox.iter(), &clauses("receive {init, P} -> P end"), &Env::new()).is_none());
    }

    #[test]
    fn selective_receive_takes_oldest_match() {
        let mbox = [
            msg("l5", Value::Tuple(vec![Value::atom("ping")])),
            msg("l1", Value::Tuple(vec![Value::atom("init"), Value::Pid(Pid(1))])),
        ];
        let (pos, ci, _) = select_message(mbox.iter(), &clauses("receive {init, P} -> P end"), &Env::new()).unwrap();
        assert_eq!((pos, ci), (1, 0));
    }

    #[test]
    fn catch_all_takes_first_message() {
        let mbox = [msg("l1", Value::Int(1)), msg("l2", Value::Int(2))];
        let (pos, _, env) = select_message(mbox.iter(), &clauses("receive M -> M end"), &Env::new()).unwrap();
        assert_eq!(pos, 0);
        assert_eq!(env["M"], Value::Int(1));
    }

    #[test]
    fn messages_are_tried_before_clauses() {
        let mbox = [msg("a", Value::atom("second")), msg("b", Value::atom("first"))];
        let cs = clauses("receive first -> 1; second -> 2 end");
        let (pos, ci, _) = select_message(mbox.iter(), &cs, &Env::new()).unwrap();
        assert_eq!((pos, ci), (0, 1));
    }

    #[test]
    fn arithmetic_runs_to_completion() {
        let m = parse_module("main() -> 1 + 2.").unwrap();
        let mut ps = ProcState::spawn(&m, Pid(0), "main", vec![]);
        assert_eq!(ps.step(), StepOutcome::Progressed);
        assert_eq!(run_to_end(&mut ps), StepOutcome::Finished(Value::Int(3)));
        assert_eq!(ps.status(), &Status::Finished(Value::Int(3)));
    }

    #[test]
    fn send_surfaces_as_request() {
        let m = parse_module("main(P) -> P ! {ping}.").unwrap();
        let mut ps = ProcState::spawn(&m, Pid(0), "main", vec![Value::Pid(Pid(4))]);
        let out = run_to_end(&mut ps);
        assert_eq!(
            out,
            StepOutcome::Request(ConcurrentEvent::SendReq {
                target: Pid(4),
                value: Value::Tuple(vec![Value::atom("ping")])
            })
        );
        ps.resume(Value::Tuple(vec![Value::atom("ping")]));
        assert_eq!(run_to_end(&mut ps), StepOutcome::Finished(Value::Tuple(vec![Value::atom("ping")])));
    }

    #[test]
    fn receive_consumes_and_reports_tag() {
        let m = parse_module("main() -> receive {req, F} -> F end.").unwrap();
        let mut ps = ProcState::spawn(&m, Pid(0), "main", vec![]);
        ps.deliver(msg("l3", Value::Tuple(vec![Value::atom("req"), Value::Pid(Pid(2))])));
        assert_eq!(
            ps.step(),
            StepOutcome::Request(ConcurrentEvent::ReceiveDone { tag: Tag::new("l3").unwrap() })
        );
        assert!(ps.mailbox().is_empty());
        assert_eq!(run_to_end(&mut ps), StepOutcome::Finished(Value::Pid(Pid(2))));
    }

    #[test]
    fn receive_blocks_and_wakes_on_match_only() {
        let m = parse_module("main() -> receive go -> done end.").unwrap();
        let mut ps = ProcState::spawn(&m, Pid(0), "main", vec![]);
        assert_eq!(ps.step(), StepOutcome::Blocked);
        assert_eq!(ps.status(), &Status::BlockedOnReceive);
        ps.deliver(msg("a", Value::atom("stop")));
        assert_eq!(ps.status(), &Status::BlockedOnReceive);
        ps.deliver(msg("b", Value::atom("go")));
        assert!(ps.is_runnable());
        assert!(matches!(ps.step(), StepOutcome::Request(ConcurrentEvent::ReceiveDone { .. })));
        assert_eq!(ps.mailbox().len(), 1);
    }

    #[test]
    fn type_error_crashes() {
        let m = parse_module("main() -> 1 + ok.").unwrap();
        let mut ps = ProcState::spawn(&m, Pid(0), "main", vec![]);
        assert!(matches!(run_to_end(&mut ps), StepOutcome::Crashed(r) if r.starts_with("badarith")));
    }

    #[test]
    fn bind_mismatch_crashes() {
        let m = parse_module("main() -> {a, X} = {b, 1}, X.").unwrap();
        let mut ps = ProcState::spawn(&m, Pid(0), "main", vec![]);
        assert!(matches!(run_to_end(&mut ps), StepOutcome::Crashed(r) if r.starts_with("badmatch")));
    }

    #[test]
    fn unknown_spawn_target_crashes_on_first_step() {
        let m = parse_module("main() -> 0.").unwrap();
        let mut ps = ProcState::spawn(&m, Pid(1), "nope", vec![Value::Int(1)]);
        assert!(ps.is_runnable());
        assert_eq!(ps.step(), StepOutcome::Crashed("undef: nope/1".into()));
    }

    #[test]
    fn tail_recursion_keeps_the_stack_flat() {
        let m = parse_module(
            "main() -> count(0, 10000).\n\
             count(Acc, 0) -> Acc;\n",
        );
        // Multi-clause heads are not part of the language.
        assert!(m.is_err());
        let m = parse_module(
            "main() -> count(0, 10000).\n\
             count(Acc, N) -> case N of 0 -> Acc; _ -> count(Acc + N, N - 1) end.",
        )
        .unwrap();
        let mut ps = ProcState::spawn(&m, Pid(0), "main", vec![]);
        let mut max_frames = 0;
        loop {
            match ps.step() {
                StepOutcome::Progressed => max_frames = max_frames.max(ps.frames.len()),
                other => {
                    assert_eq!(other, StepOutcome::Finished(Value::Int(50005000)));
                    break;
                }
            }
        }
        assert!(max_frames < 10, "stack grew to {max_frames}");
    }

    #[test]
    fn stepping_is_deterministic() {
        let m = parse_module("main() -> X = {1, [2, 3]}, case X of {A, [B | _]} -> A * B end.").unwrap();
        let mut a = ProcState::spawn(&m, Pid(0), "main", vec![]);
        let mut b = a.clone();
        loop {
            let (oa, ob) = (a.step(), b.step());
            assert_eq!(oa, ob);
            if oa != StepOutcome::Progressed {
                break;
            }
        }
    }
}
