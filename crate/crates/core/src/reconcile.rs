//! Reconciliation functions: total orders over a command DAG.
//!
//! Every function here returns each command of the DAG exactly once. `bfs`
//! orders by distance from the root, `fair` grows the history through a
//! round-robin sequence of leader vertices, and `lifo` is a deliberately
//! unstable baseline used as a negative control.

use std::fmt::{self, Display};
use std::str::FromStr;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{CommandDag, CommandId, History};

/// Selects a reconciliation function by name (`bfs`, `fair`, `lifo`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconcileFn {
    Bfs,
    Fair,
    Lifo,
}

impl ReconcileFn {
    pub const ALL: [ReconcileFn; 3] = [ReconcileFn::Bfs, ReconcileFn::Fair, ReconcileFn::Lifo];

    pub fn order<O: Clone>(self, dag: &CommandDag<O>) -> History<O> {
        match self {
            ReconcileFn::Bfs => bfs(dag),
            ReconcileFn::Fair => fair(dag),
            ReconcileFn::Lifo => lifo(dag),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ReconcileFn::Bfs => "bfs",
            ReconcileFn::Fair => "fair",
            ReconcileFn::Lifo => "lifo",
        }
    }
}

impl Display for ReconcileFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown reconciliation function `{0}` (expected bfs, fair or lifo)")]
pub struct UnknownReconcileFn(pub String);

impl FromStr for ReconcileFn {
    type Err = UnknownReconcileFn;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bfs" => Ok(ReconcileFn::Bfs),
            "fair" => Ok(ReconcileFn::Fair),
            "lifo" => Ok(ReconcileFn::Lifo),
            other => Err(UnknownReconcileFn(other.to_owned())),
        }
    }
}

/// Distance-based order: levels by ascending distance from the root, each
/// level by ascending issuer id.
pub fn bfs<O: Clone>(dag: &CommandDag<O>) -> History<O> {
    let mut indices: Vec<usize> = (0..dag.len()).collect();
    indices.sort_unstable_by_key(|&i| dag.sort_key(i));
    indices.into_iter().map(|i| dag.node_command(i).clone()).collect()
}

/// One iteration of the fair loop: `leader` was appended and the history
/// then had `end` commands, `leader` being the last of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeaderStep {
    pub leader: CommandId,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FairOrder<O> {
    pub history: History<O>,
    pub leaders: Vec<LeaderStep>,
}

/// Fair order. See [`fair_with_leaders`].
pub fn fair<O: Clone>(dag: &CommandDag<O>) -> History<O> {
    fair_with_leaders(dag).history
}

/// Fair order together with the sequence of leader vertices it picked.
///
/// Issuers are visited round-robin in ascending id order starting from the
/// lowest on every call. The visited issuer contributes its lowest-sequence
/// vertex whose causal past covers everything ordered so far, and that past
/// is appended in topological order. The loop stops after a full round
/// without a contribution; the remaining vertices are then appended in
/// topological order.
///
/// After each step the ordered set equals the causal past of the last
/// leader, so "covers everything ordered so far" reduces to "has the last
/// leader as an ancestor". Each issuer's commands form a causal chain, which
/// makes that predicate monotone along the chain and lets the lowest
/// qualifying vertex be found by binary search.
pub fn fair_with_leaders<O: Clone>(dag: &CommandDag<O>) -> FairOrder<O> {
    let issuers: Vec<_> = dag.issuers().collect();
    let mut ordered = FixedBitSet::with_capacity(dag.len());
    let mut out: Vec<usize> = Vec::with_capacity(dag.len());
    let mut leaders = Vec::new();
    let mut last_leader: Option<usize> = None;

    let mut turn = 0;
    let mut idle = 0;
    while idle < issuers.len() {
        let chain = dag.chain(issuers[turn]);
        turn = (turn + 1) % issuers.len();

        let qualifies = |i: usize| last_leader.map_or(true, |l| dag.node_ancestors(i).contains(l));
        let first = chain.partition_point(|&i| !qualifies(i));
        let Some(&leader) = chain.get(first) else {
            idle += 1;
            continue;
        };
        idle = 0;

        let start = out.len();
        out.extend(dag.node_ancestors(leader).ones().filter(|&a| !ordered.contains(a)));
        out.push(leader);
        out[start..].sort_unstable_by_key(|&i| dag.sort_key(i));
        for &i in &out[start..] {
            ordered.insert(i);
        }
        debug_assert_eq!(out.last(), Some(&leader));
        leaders.push(LeaderStep { leader: dag.node_command(leader).id(), end: out.len() });
        last_leader = Some(leader);
    }

    let start = out.len();
    out.extend((0..dag.len()).filter(|&i| !ordered.contains(i)));
    out[start..].sort_unstable_by_key(|&i| dag.sort_key(i));

    FairOrder { history: out.into_iter().map(|i| dag.node_command(i).clone()).collect(), leaders }
}

/// Newest-first order by local insertion time. Satisfies totality but not
/// stability; only meant as a negative control.
pub fn lifo<O: Clone>(dag: &CommandDag<O>) -> History<O> {
    dag.commands().rev().cloned().collect()
}
