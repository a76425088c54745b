use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::ReplicaId;
use crate::reconcile::ReconcileFn;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown data type `{0}` (expected nfs or intlog)")]
    UnknownDataType(String),
    #[error("bad operation for replica {replica} at {at}: {reason}")]
    BadOperation { replica: ReplicaId, at: u64, reason: String },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Inclusive range of virtual-time ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickRange {
    pub min: u64,
    pub max: u64,
}

impl TickRange {
    pub const fn fixed(ticks: u64) -> Self {
        Self { min: ticks, max: ticks }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledOp {
    pub replica: ReplicaId,
    pub at: u64,
    /// Operation literal of the scenario's data type, e.g. `mkdir(/,d1)`.
    pub op: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Workload {
    /// Fixed operations at fixed times.
    Explicit(Vec<ScheduledOp>),
    /// `commands` issues at random replicas separated by random gaps. Each
    /// operation is drawn at issue time so that it is enabled locally.
    Random {
        commands: usize,
        gap: TickRange,
        #[serde(default)]
        start: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Permanently stops `replica` at `at`. Its undelivered outgoing
    /// messages are discarded.
    Crash { replica: ReplicaId, at: u64 },
    /// Defers every delivery on the listed (undirected) links that falls in
    /// `[start, end)` until `end`.
    Partition { links: Vec<(ReplicaId, ReplicaId)>, start: u64, end: u64 },
}

fn default_snapshot_every() -> u32 {
    1
}

fn default_horizon() -> u64 {
    10_000_000
}

/// A simulation input: replicas, workload, faults and seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub n: u32,
    pub datatype: String,
    pub recon: ReconcileFn,
    #[serde(default)]
    pub seed: u64,
    /// Maximum number of trace events.
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    /// Deliver every in-flight message after the last input. Without it the
    /// run stops right after the last input.
    #[serde(default)]
    pub quiescence_flush: bool,
    pub delay: TickRange,
    pub workload: Workload,
    #[serde(default)]
    pub faults: Vec<Fault>,
    /// Record every k-th history snapshot per replica (plus every snapshot
    /// after the last input and each replica's final one).
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: u32,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn replicas(&self) -> impl Iterator<Item = ReplicaId> {
        (1..=self.n).map(ReplicaId)
    }

    fn check_replica(&self, r: ReplicaId) -> Result<(), ConfigError> {
        if r.0 == 0 || r.0 > self.n {
            return Err(invalid(format!("replica {r} is outside 1..={}", self.n)));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        if self.datatype != "nfs" && self.datatype != "intlog" {
            return Err(ConfigError::UnknownDataType(self.datatype.clone()));
        }
        if self.delay.min == 0 || self.delay.min > self.delay.max {
            return Err(invalid("delay must satisfy 1 <= min <= max"));
        }
        if self.snapshot_every == 0 {
            return Err(invalid("snapshot_every must be at least 1"));
        }
        match &self.workload {
            Workload::Explicit(ops) => {
                for op in ops {
                    self.check_replica(op.replica)?;
                }
            }
            Workload::Random { gap, .. } => {
                if gap.min > gap.max {
                    return Err(invalid("workload gap must satisfy min <= max"));
                }
            }
        }
        let mut crashed = BTreeSet::new();
        for fault in &self.faults {
            match fault {
                Fault::Crash { replica, .. } => {
                    self.check_replica(*replica)?;
                    if !crashed.insert(*replica) {
                        return Err(invalid(format!("replica {replica} crashes twice")));
                    }
                }
                Fault::Partition { links, start, end } => {
                    if start >= end {
                        return Err(invalid("partitions must end after they start"));
                    }
                    for &(a, b) in links {
                        self.check_replica(a)?;
                        self.check_replica(b)?;
                        if a == b {
                            return Err(invalid(format!("link {a}-{b} is a self-loop")));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Scenario {
        Scenario {
            name: "t".into(),
            n: 2,
            datatype: "nfs".into(),
            recon: ReconcileFn::Bfs,
            seed: 1,
            horizon: 100,
            quiescence_flush: true,
            delay: TickRange { min: 1, max: 3 },
            workload: Workload::Explicit(vec![]),
            faults: vec![],
            snapshot_every: 1,
        }
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let s = base();
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
        let minimal = r#"{"n":1,"datatype":"intlog","recon":"fair","delay":{"min":1,"max":1},
                          "workload":{"random":{"commands":3,"gap":{"min":1,"max":2}}}}"#;
        let s = Scenario::from_json(minimal).unwrap();
        assert_eq!(s.snapshot_every, 1);
        assert!(!s.quiescence_flush);
        assert!(s.faults.is_empty());
    }

    #[test]
    fn rejects_malformed() {
        let mut s = base();
        s.n = 0;
        assert!(s.validate().is_err());

        let mut s = base();
        s.datatype = "kv".into();
        assert!(matches!(s.validate(), Err(ConfigError::UnknownDataType(_))));

        let mut s = base();
        s.faults = vec![Fault::Partition { links: vec![(ReplicaId(1), ReplicaId(2))], start: 5, end: 5 }];
        assert!(s.validate().is_err());

        let mut s = base();
        s.faults = vec![Fault::Crash { replica: ReplicaId(3), at: 1 }];
        assert!(s.validate().is_err());

        let mut s = base();
        s.delay = TickRange { min: 0, max: 1 };
        assert!(s.validate().is_err());

        assert!(Scenario::from_json(r#"{"n":2}"#).is_err());
        assert!(Scenario::from_json(
            r#"{"n":1,"datatype":"nfs","recon":"lru","delay":{"min":1,"max":1},"workload":{"explicit":[]}}"#
        )
        .is_err());
    }
}
