//! Enumerating behaviours by iterated race reversal.
//!
//! Exploration starts from an unconstrained run. Every race found in a
//! resulting trace yields a reversal prefix, which seeds a further run.
//! Prefixes are deduplicated by their canonical text, and each branch
//! remembers which races it already flipped so it does not flip them back.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;

use crate::lang::Module;
use crate::races::{causal_order, find_races_with, prefix_for_reversal_with, Race};
use crate::runtime::{render_outcomes, run, OutcomeMap, Policy, RunConfig, RunResult, RunStatus, SetupError};
use crate::tracemodel::{check_well_formed_trace, log_projection, render_actions, ActionBook};

#[derive(Debug, Clone)]
pub struct ExploreConfig {
    pub max_runs: usize,
    pub max_depth: usize,
    pub entry: String,
    pub policy: Policy,
    pub max_steps: u64,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            max_runs: 1000,
            max_depth: 64,
            entry: "main".into(),
            policy: Policy::RoundRobin,
            max_steps: crate::runtime::DEFAULT_MAX_STEPS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub prefix: ActionBook,
    pub depth: usize,
    pub trace: ActionBook,
    pub outcomes: OutcomeMap,
    pub status: RunStatus,
}

#[derive(Debug, Clone, Default)]
pub struct ExploreReport {
    /// Sorted by the canonical text of the prefix.
    pub executions: Vec<Execution>,
    /// Canonical log projections of the genuine executions.
    pub distinct_logs: BTreeSet<String>,
    pub distinct_outcomes: BTreeSet<OutcomeMap>,
    pub exhausted: bool,
}

/// Runs that reflect a real behaviour of the program. Divergent or
/// incomplete replays are artefacts of the prefix and are left out of the
/// distinct sets.
fn is_genuine(status: &RunStatus) -> bool {
    matches!(status, RunStatus::Completed | RunStatus::Deadlock { .. })
}

struct Branch {
    prefix: ActionBook,
    key: String,
    reversed: BTreeSet<Race>,
    depth: usize,
}

pub fn explore(module: &Module, cfg: &ExploreConfig) -> Result<ExploreReport, SetupError> {
    let base = RunConfig {
        entry: cfg.entry.clone(),
        policy: cfg.policy,
        max_steps: cfg.max_steps,
        ..RunConfig::default()
    };
    // Surface setup problems (e.g. a missing entry) once, up front.
    crate::runtime::Runtime::new(module, &base)?;

    let mut seen: BTreeSet<String> = BTreeSet::new();
    let empty = ActionBook::new();
    seen.insert(render_actions(&empty));
    let mut level = vec![Branch { key: render_actions(&empty), prefix: empty, reversed: BTreeSet::new(), depth: 0 }];
    let mut report = ExploreReport::default();
    let mut truncated = false;

    while !level.is_empty() {
        let room = cfg.max_runs.saturating_sub(report.executions.len());
        if room == 0 {
            truncated = true;
            break;
        }
        if level.len() > room {
            level.truncate(room);
            truncated = true;
        }
        let results: Vec<Result<RunResult, SetupError>> = level
            .par_iter()
            .map(|b| run(module, &RunConfig { input_log: b.prefix.clone(), ..base.clone() }))
            .collect();

        let mut next = Vec::new();
        for (branch, result) in level.into_iter().zip(results) {
            let res = match result {
                Ok(res) => res,
                // Prefixes are validated when generated, so this only
                // happens for pathological inputs; skip the branch.
                Err(_) => continue,
            };
            if is_genuine(&res.status) {
                report.distinct_logs.insert(render_actions(&log_projection(&res.trace)));
                report.distinct_outcomes.insert(res.outcomes.clone());
                if branch.depth < cfg.max_depth {
                    next.extend(children(&branch, &res, &mut seen));
                } else if !find_races_in(&res).is_empty() {
                    truncated = true;
                }
            }
            report.executions.push(Execution {
                prefix: branch.prefix,
                depth: branch.depth,
                trace: res.trace,
                outcomes: res.outcomes,
                status: res.status,
            });
        }
        next.sort_by(|a, b| a.key.cmp(&b.key));
        level = next;
    }

    report.executions.sort_by_cached_key(|e| render_actions(&e.prefix));
    report.exhausted = !truncated;
    Ok(report)
}

fn find_races_in(res: &RunResult) -> Vec<Race> {
    match causal_order(&res.trace) {
        Ok(hb) => find_races_with(&res.trace, &hb),
        Err(_) => Vec::new(),
    }
}

/// New branches from the races of one run.
fn children(branch: &Branch, res: &RunResult, seen: &mut BTreeSet<String>) -> Vec<Branch> {
    if check_well_formed_trace(&res.trace).is_err() {
        return Vec::new();
    }
    let Ok(hb) = causal_order(&res.trace) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for race in find_races_with(&res.trace, &hb) {
        if branch.reversed.contains(&race) {
            continue;
        }
        // The receive that took the earlier message must also accept the
        // later one, or the reversed run would block there.
        let accepts = match (res.receive_sites.get(&race.earlier), res.messages.get(&race.later)) {
            (Some(site), Some(value)) => site.accepts(value),
            _ => true,
        };
        if !accepts {
            continue;
        }
        let Ok(prefix) = prefix_for_reversal_with(&res.trace, &hb, &race) else {
            continue;
        };
        let key = render_actions(&prefix);
        if !seen.insert(key.clone()) {
            continue;
        }
        let mut reversed = branch.reversed.clone();
        reversed.insert(race.flipped());
        reversed.insert(race);
        out.push(Branch { prefix, key, reversed, depth: branch.depth + 1 });
    }
    out
}

impl ExploreReport {
    /// Counts and the table of distinct outcome maps.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("executions: {}\n", self.executions.len()));
        out.push_str(&format!("distinct logs: {}\n", self.distinct_logs.len()));
        out.push_str(&format!("distinct outcomes: {}\n", self.distinct_outcomes.len()));
        out.push_str(&format!("exhausted: {}\n", self.exhausted));
        let mut statuses: BTreeMap<String, usize> = BTreeMap::new();
        for e in &self.executions {
            let name = match &e.status {
                RunStatus::Completed => "completed",
                RunStatus::Deadlock { .. } => "deadlock",
                RunStatus::Divergence(_) => "divergence",
                RunStatus::IncompleteReplay(_) => "incomplete replay",
                RunStatus::StepLimit => "step limit",
            };
            *statuses.entry(name.to_string()).or_default() += 1;
        }
        for (name, n) in statuses {
            out.push_str(&format!("  {name}: {n}\n"));
        }
        for (i, outcomes) in self.distinct_outcomes.iter().enumerate() {
            out.push_str(&format!("\noutcome {}\n", i + 1));
            for line in render_outcomes(outcomes).lines() {
                out.push_str(&format!("  {line}\n"));
            }
        }
        out
    }

    /// Writes `NNN.prefix.log`, `NNN.trace` per execution and `report.txt`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (i, e) in self.executions.iter().enumerate() {
            let n = i + 1;
            fs::write(dir.join(format!("{n:03}.prefix.log")), render_actions(&e.prefix))?;
            fs::write(dir.join(format!("{n:03}.trace")), render_actions(&e.trace))?;
        }
        fs::write(dir.join("report.txt"), self.summary())
    }
}
