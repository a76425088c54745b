//! Trace checkers.
//!
//! Every checker reads only the trace, so a trace file produced elsewhere
//! can be checked after the fact and gets the same verdicts.

mod convergence;
mod fairness;
mod safety;
mod stability;

pub use convergence::check_convergence;
pub use fairness::{fairness_report, FairnessReport};
pub use safety::{
    check_message_complexity, check_monotonicity, check_rb_integrity, check_rb_totality, check_rb_validity,
    check_validity, check_wait_freedom, dag_checks,
};
pub use stability::{stable_prefix, CommandStability, CurvePoint, ReplicaStability, StabilityReport};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dag::{CommandId, ReplicaId};

use super::trace::{EventKind, Trace};

const MAX_LISTED_VIOLATIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// The trace does not contain enough information for a verdict.
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub status: Status,
    pub detail: String,
    pub violation_count: usize,
    /// The first few violations.
    pub violations: Vec<String>,
}

impl Verdict {
    pub fn new(name: &str, status: Status, detail: impl Into<String>) -> Self {
        Self { name: name.to_owned(), status, detail: detail.into(), violation_count: 0, violations: Vec::new() }
    }

    pub fn from_violations(name: &str, violations: Vec<String>, detail: impl Into<String>) -> Self {
        let status = if violations.is_empty() { Status::Pass } else { Status::Fail };
        Self {
            name: name.to_owned(),
            status,
            detail: detail.into(),
            violation_count: violations.len(),
            violations: violations.into_iter().take(MAX_LISTED_VIOLATIONS).collect(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    /// Starvation window K.
    pub window: usize,
    /// In runs that stop before quiescence, commands issued in this final
    /// fraction of the input period are not expected in the stable prefix.
    pub fairness_margin: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { window: 10, fairness_margin: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub options: CheckOptions,
    pub safety: Vec<Verdict>,
    pub convergence: Verdict,
    pub stable_prefix_growth: Verdict,
    pub stability: StabilityReport,
    pub fairness: FairnessReport,
    pub passed: bool,
}

impl CheckReport {
    /// All verdicts, starvation included, in report order.
    pub fn verdicts(&self) -> impl Iterator<Item = &Verdict> {
        self.safety
            .iter()
            .chain([&self.convergence, &self.stable_prefix_growth, &self.fairness.fairness])
            .chain(self.fairness.starvation.values())
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts().find(|v| v.name == name)
    }
}

/// Runs every checker on `trace`.
pub fn check_all(trace: &Trace, options: CheckOptions) -> CheckReport {
    let mut safety = vec![check_validity(trace), check_monotonicity(trace), check_wait_freedom(trace)];
    safety.extend(dag_checks(trace));
    safety.extend([
        check_rb_integrity(trace),
        check_rb_validity(trace),
        check_rb_totality(trace),
        check_message_complexity(trace),
    ]);
    let convergence = check_convergence(trace);
    let stability = stable_prefix(trace);
    let stable_prefix_growth = Verdict::from_violations(
        "stable_prefix_growth",
        stability.growth_violations(),
        format!(
            "final stabilized prefix {} of {} issued commands",
            stability.stable_prefix.len(),
            stability.commands.len()
        ),
    );
    let fairness = fairness_report(trace, &stability, &options);
    let mut report =
        CheckReport { options, safety, convergence, stable_prefix_growth, stability, fairness, passed: false };
    let passed = !report.verdicts().any(Verdict::failed);
    report.passed = passed;
    report
}

// Shared trace views.

/// Replicas that have not crashed by the end of the trace.
pub(crate) fn correct_replicas(trace: &Trace) -> BTreeSet<ReplicaId> {
    let crashed: BTreeSet<_> = trace
        .events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Crash { replica } => Some(replica),
            _ => None,
        })
        .collect();
    trace.scenario().replicas().filter(|r| !crashed.contains(r)).collect()
}

/// Final recorded history of each replica (empty if it never recorded one).
pub(crate) fn final_histories(trace: &Trace) -> BTreeMap<ReplicaId, &[CommandId]> {
    let mut out: BTreeMap<ReplicaId, &[CommandId]> = trace.scenario().replicas().map(|r| (r, &[][..])).collect();
    for e in &trace.events {
        if let EventKind::History { replica, history } = &e.kind {
            out.insert(*replica, history);
        }
    }
    out
}

pub(crate) fn common_prefix_len(a: &[CommandId], b: &[CommandId]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}
