//! Exhaustive enumeration of scheduling choices.
//!
//! Every runnable process is tried at every choice point. States already
//! visited are recognised by their fingerprint and not expanded again.

use std::collections::{BTreeSet, HashSet};

use mmp_core::lang::Module;
use mmp_core::runtime::{OutcomeMap, RunConfig, RunStatus, Runtime};
use mmp_core::tracemodel::{check_well_formed_trace, log_projection, render_actions};

#[derive(Debug, Default)]
pub struct OracleReport {
    pub outcomes: BTreeSet<OutcomeMap>,
    pub logs: BTreeSet<String>,
    pub states: usize,
    pub ill_formed: usize,
}

pub fn enumerate(module: &Module) -> OracleReport {
    let root = Runtime::new(module, &RunConfig::default()).expect("entry exists");
    let mut seen = HashSet::new();
    let mut report = OracleReport::default();
    let mut stack = vec![root];
    while let Some(rt) = stack.pop() {
        if !seen.insert(rt.fingerprint()) {
            continue;
        }
        report.states += 1;
        let runnable = rt.runnable();
        if runnable.is_empty() {
            let res = rt.finish();
            if check_well_formed_trace(&res.trace).is_err() {
                report.ill_formed += 1;
            }
            if matches!(res.status, RunStatus::Completed | RunStatus::Deadlock { .. }) {
                report.logs.insert(render_actions(&log_projection(&res.trace)));
                report.outcomes.insert(res.outcomes);
            }
            continue;
        }
        for pid in runnable {
            let mut next = rt.clone();
            next.turn(pid);
            stack.push(next);
        }
    }
    report
}
