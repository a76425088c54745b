//! Built-in scenarios, shipped as JSON under `fixtures/scenarios`.

use crate::dag::{Command, CommandDag, ReplicaId};
use crate::datatype::{replay, Nfs, NfsOp, Response};
use crate::reconcile::ReconcileFn;

use super::engine::Simulation;
use super::scenario::Scenario;
use super::trace::Trace;

const BUILTIN: &[(&str, &str)] = &[
    ("fig1", include_str!("../../fixtures/scenarios/fig1.json")),
    ("starvation", include_str!("../../fixtures/scenarios/starvation.json")),
    ("standard_random", include_str!("../../fixtures/scenarios/standard_random.json")),
    ("continuous", include_str!("../../fixtures/scenarios/continuous.json")),
    ("empty", include_str!("../../fixtures/scenarios/empty.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(name, _)| *name)
}

pub fn builtin(name: &str) -> Option<Scenario> {
    let (_, text) = BUILTIN.iter().find(|(n, _)| *n == name)?;
    Some(Scenario::from_json(text).expect("built-in scenarios are valid"))
}

/// The three-replica NFS run whose final DAG is the worked example
/// with vertices A..G.
pub fn fig1() -> Scenario {
    builtin("fig1").expect("built in")
}

/// Two NFS replicas; replica 1 repeatedly creates a directory, then removes
/// it concurrently with replica 2 creating a child inside it.
pub fn starvation() -> Scenario {
    builtin("starvation").expect("built in")
}

/// Five replicas, 200 random commands, one partition, one crash, flushed.
pub fn standard_random() -> Scenario {
    builtin("standard_random").expect("built in")
}

/// Three replicas, 300 random commands, stops at the last input.
pub fn continuous() -> Scenario {
    builtin("continuous").expect("built in")
}

pub fn empty() -> Scenario {
    builtin("empty").expect("built in")
}

/// Final state of the [`fig1`] scenario under one reconciliation function.
#[derive(Debug, Clone)]
pub struct Fig1Outcome {
    pub recon: ReconcileFn,
    /// Replica 1's final history with the response of every command.
    pub history: Vec<(Command<NfsOp>, Response)>,
    pub dag: CommandDag<NfsOp>,
    /// Whether all replicas ended with the same DAG and history.
    pub converged: bool,
    pub trace: Trace,
}

pub fn run_fig1(recon: ReconcileFn) -> Fig1Outcome {
    let mut scenario = fig1();
    scenario.recon = recon;
    let mut sim = Simulation::new(&scenario, Nfs).expect("built-in scenario is valid");
    sim.run_until_done();
    let first = sim.replica(ReplicaId(1));
    let converged = sim.replicas().iter().all(|r| r.dag() == first.dag() && r.history().ids() == first.history().ids());
    let commands = first.history().to_vec();
    let (_, responses) = replay(&Nfs, commands.iter().map(|c| &c.op));
    let dag = first.dag().clone();
    Fig1Outcome {
        recon,
        history: commands.into_iter().zip(responses).collect(),
        dag,
        converged,
        trace: sim.into_trace(),
    }
}
