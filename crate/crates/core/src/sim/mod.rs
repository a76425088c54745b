//! Deterministic simulation of a replica group, its trace, and the checkers
//! that read the trace.

pub mod check;
pub mod engine;
pub mod fixtures;
pub mod scenario;
pub mod trace;

pub use check::{check_all, CheckOptions, CheckReport, Status, Verdict};
pub use engine::{run, Simulation};
pub use scenario::{ConfigError, Fault, Scenario, ScheduledOp, TickRange, Workload};
pub use trace::{EventKind, StopReason, Trace, TraceError, TraceEvent};
