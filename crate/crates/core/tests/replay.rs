use mmp_core::lang::parse_module;
use mmp_core::runtime::{run, Policy, RunConfig, RunStatus};
use mmp_core::tracemodel::{
    check_well_formed_trace, log_projection, parse_actions, render_actions, Action, ActionBook, Ref, Tag,
};

const FIG1: &str = include_str!("../examples/fig1.mmp");
const LOG2: &str = include_str!("data/log2.txt");
const LOG3: &str = include_str!("data/log3.txt");
const GOLDEN: &str = include_str!("data/fig1_log2.trace");

fn r(s: &str) -> Ref {
    Ref::new(s).unwrap()
}

fn position(seq: &[Action], a: &Action) -> usize {
    seq.iter().position(|x| x == a).unwrap_or_else(|| panic!("{a} missing"))
}

#[test]
fn replay_of_log2_reproduces_it() {
    let m = parse_module(FIG1).unwrap();
    let res = run(&m, &RunConfig::with_log(parse_actions(LOG2).unwrap())).unwrap();
    assert_eq!(res.status, RunStatus::Completed);
    assert_eq!(render_actions(&log_projection(&res.trace)), LOG2);
}

#[test]
fn replay_of_log2_matches_golden_trace() {
    let m = parse_module(FIG1).unwrap();
    let res = run(&m, &RunConfig::with_log(parse_actions(LOG2).unwrap())).unwrap();
    assert_eq!(render_actions(&res.trace), GOLDEN);
}

#[test]
fn golden_trace_is_consistent() {
    let golden = parse_actions(GOLDEN).unwrap();
    check_well_formed_trace(&golden).unwrap();
    for (p, seq) in golden.iter() {
        for a in seq {
            if let Action::Receive(tag) = a {
                let d = position(seq, &Action::Deliver(tag.clone()));
                assert!(d < position(seq, a), "{p}: deliver({tag}) after its receive");
            }
        }
    }
    // Delivering l1 and l2 both before p3 receives l1 is also feasible;
    // replay delivers lazily, so only l1 is there at that point.
    let p3 = golden.get(&r("p3"));
    let r1 = position(p3, &Action::Receive(Tag::new("l1").unwrap()));
    assert!(position(p3, &Action::Deliver(Tag::new("l1").unwrap())) < r1);
    assert!(position(p3, &Action::Deliver(Tag::new("l2").unwrap())) > r1);
}

#[test]
fn replay_pins_behaviour_under_any_policy() {
    let m = parse_module(FIG1).unwrap();
    for seed in 0..20 {
        let cfg = RunConfig { policy: Policy::Random(seed), ..RunConfig::with_log(parse_actions(LOG2).unwrap()) };
        let res = run(&m, &cfg).unwrap();
        assert_eq!(res.status, RunStatus::Completed);
        assert_eq!(render_actions(&log_projection(&res.trace)), LOG2);
    }
}

#[test]
fn prefix_log3_swaps_the_first_race() {
    let m = parse_module(FIG1).unwrap();
    let log3 = parse_actions(LOG3).unwrap();
    let res = run(&m, &RunConfig::with_log(log3.clone())).unwrap();
    assert_eq!(res.status, RunStatus::Completed);
    check_well_formed_trace(&res.trace).unwrap();
    let p3 = res.trace.get(&r("p3"));
    let d1 = position(p3, &Action::Deliver(Tag::new("l1").unwrap()));
    let d2 = position(p3, &Action::Deliver(Tag::new("l2").unwrap()));
    assert!(d2 < d1);
    let projected = log_projection(&res.trace);
    let restricted: ActionBook =
        log3.iter().map(|(p, seq)| (p.clone(), projected.get(p)[..seq.len()].to_vec())).collect();
    assert_eq!(restricted, log3);
}

#[test]
fn fresh_names_after_the_prefix() {
    let m = parse_module(FIG1).unwrap();
    let res = run(&m, &RunConfig::with_log(parse_actions(LOG3).unwrap())).unwrap();
    // p3 replayed no send, so its first is p3:1; p2 replayed one, so p2:2.
    assert!(res.trace.get(&r("p3")).contains(&Action::Send(Tag::new("p3:1").unwrap())));
    assert!(res.trace.get(&r("p2")).contains(&Action::Send(Tag::new("p2:2").unwrap())));
}

#[test]
fn swapped_log_diverges_naming_process_and_action() {
    let m = parse_module(FIG1).unwrap();
    let swapped = LOG2.replace("p3 receive(l2)\np3 receive(l4)", "p3 receive(l4)\np3 receive(l2)");
    let res = run(&m, &RunConfig::with_log(parse_actions(&swapped).unwrap())).unwrap();
    match res.status {
        RunStatus::Divergence(report) => {
            assert!(report.contains("p3"), "{report}");
            assert!(report.contains("expected receive(l4)"), "{report}");
        }
        other => panic!("expected divergence, got {other}"),
    }
}

#[test]
fn unconsumed_log_is_incomplete_replay() {
    let m = parse_module("main() -> ok.").unwrap();
    let log = parse_actions("p1 spawn(p2)\n").unwrap();
    let res = run(&m, &RunConfig::with_log(log)).unwrap();
    assert!(matches!(res.status, RunStatus::IncompleteReplay(ref s) if s.contains("p1 still expects spawn(p2)")));
}

#[test]
fn tracing_is_reproducible() {
    let m = parse_module(FIG1).unwrap();
    for policy in [Policy::RoundRobin, Policy::Random(11)] {
        let cfg = RunConfig { policy, ..RunConfig::default() };
        let a = run(&m, &cfg).unwrap();
        let b = run(&m, &cfg).unwrap();
        assert_eq!(render_actions(&a.trace), render_actions(&b.trace));
        assert_eq!(a.outcomes, b.outcomes);
    }
}
