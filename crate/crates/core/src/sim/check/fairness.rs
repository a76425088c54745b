use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dag::ReplicaId;

use super::super::trace::Trace;
use super::{correct_replicas, CheckOptions, StabilityReport, Status, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    /// Commands of correct replicas eventually stabilize.
    pub fairness: Verdict,
    /// Per replica: within its last `window` stabilized commands, at least
    /// one kept the basis it was issued on.
    pub starvation: BTreeMap<ReplicaId, Verdict>,
}

pub fn fairness_report(trace: &Trace, stability: &StabilityReport, options: &CheckOptions) -> FairnessReport {
    let correct = correct_replicas(trace);

    let mut due = stability.commands.iter().filter(|c| correct.contains(&c.id.issuer)).peekable();
    let first_vt = stability.commands.first().map_or(0, |c| c.issued_vt);
    let last_vt = stability.commands.last().map_or(0, |c| c.issued_vt);
    let (scope, deadline) = if stability.quiescent {
        ("all commands".to_owned(), u64::MAX)
    } else {
        let span = (last_vt - first_vt) as f64;
        let deadline = first_vt + (span * (1.0 - options.fairness_margin)).floor() as u64;
        (format!("commands issued by vt {deadline}"), deadline)
    };
    let mut checked = 0;
    let mut violations = Vec::new();
    while let Some(c) = due.next_if(|c| c.issued_vt <= deadline) {
        checked += 1;
        if c.stabilized_t.is_none() {
            violations.push(format!("{} issued at vt {} never stabilized", c.id, c.issued_vt));
        }
    }
    let mut fairness =
        Verdict::from_violations("fairness", violations, format!("{checked} of correct replicas' {scope} checked"));
    if checked == 0 && !stability.quiescent && !stability.commands.is_empty() {
        fairness.status = Status::Indeterminate;
    }

    let starvation = trace
        .scenario()
        .replicas()
        .map(|r| {
            let name = format!("starvation[{r}]");
            if !correct.contains(&r) {
                return (r, Verdict::new(&name, Status::Indeterminate, "replica crashed"));
            }
            let stable: Vec<_> =
                stability.commands.iter().filter(|c| c.id.issuer == r && c.basis_kept.is_some()).collect();
            let window = &stable[stable.len().saturating_sub(options.window)..];
            let kept = window.iter().filter(|c| c.basis_kept == Some(true)).count();
            let detail = format!("{kept} of the last {} stabilized commands kept their basis", window.len());
            let status = if kept > 0 {
                Status::Pass
            } else if window.len() >= options.window && options.window > 0 {
                Status::Fail
            } else {
                Status::Indeterminate
            };
            let mut verdict = Verdict::new(&name, status, detail);
            if status == Status::Fail {
                verdict.violation_count = window.len();
                verdict.violations = window
                    .iter()
                    .map(|c| format!("{} stabilized at position {:?} on a changed basis", c.id, c.stable_position))
                    .collect();
            }
            (r, verdict)
        })
        .collect();

    FairnessReport { fairness, starvation }
}
