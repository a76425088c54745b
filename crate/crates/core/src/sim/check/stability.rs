//! Stable prefix and revocations.
//!
//! At step `t` the stable prefix is the longest common prefix of every
//! correct replica's current history and of every history any correct
//! replica records afterwards. A command inside it keeps its position and
//! its basis (the commands ordered before it) for the rest of the trace.
//!
//! The curve is evaluated up to a cutoff: the end of the trace when it is
//! quiescent, otherwise the last input. Histories recorded later still count
//! as "afterwards"; only the points reported stop there.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dag::{CommandId, ReplicaId};

use super::super::trace::{EventKind, Trace};
use super::{common_prefix_len, correct_replicas};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: u64,
    pub vt: u64,
    pub issued: usize,
    pub stable: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandStability {
    pub id: CommandId,
    /// Step and virtual time of the append.
    pub issued_t: u64,
    pub issued_vt: u64,
    /// Step at which the command entered the stable prefix.
    pub stabilized_t: Option<u64>,
    pub stable_position: Option<usize>,
    /// Whether the stable basis equals the basis the issuer saw when it
    /// appended the command; `None` while the command is not stable.
    pub basis_kept: Option<bool>,
    /// Number of observed basis changes, summed over all replicas.
    pub revocations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaStability {
    pub replica: ReplicaId,
    pub correct: bool,
    pub snapshots: usize,
    /// Basis changes observed between consecutive histories of this replica.
    pub revocations: usize,
    /// Commands issued by this replica that are in the final stable prefix.
    pub stable_commands: usize,
    /// Commands issued by this replica that no replica ever saw revoked.
    pub never_revoked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub quiescent: bool,
    pub cutoff_t: u64,
    pub curve: Vec<CurvePoint>,
    /// Stable prefix at the cutoff.
    pub stable_prefix: Vec<CommandId>,
    /// Every issued command, in issue order.
    pub commands: Vec<CommandStability>,
    pub replicas: Vec<ReplicaStability>,
}

impl StabilityReport {
    pub fn total_revocations(&self) -> usize {
        self.replicas.iter().map(|r| r.revocations).sum()
    }

    pub fn command(&self, id: CommandId) -> Option<&CommandStability> {
        self.commands.iter().find(|c| c.id == id)
    }

    /// Points where the stable prefix shrank. Empty on every trace produced
    /// by the simulator; kept as a consistency check of the computation.
    pub fn growth_violations(&self) -> Vec<String> {
        self.curve
            .windows(2)
            .filter(|w| w[1].stable < w[0].stable)
            .map(|w| format!("t={}: stable prefix shrank from {} to {}", w[1].t, w[0].stable, w[1].stable))
            .collect()
    }
}

struct Snapshot<'a> {
    replica: ReplicaId,
    history: &'a [CommandId],
}

pub fn stable_prefix(trace: &Trace) -> StabilityReport {
    let correct = correct_replicas(trace);
    let quiescent = trace.is_quiescent();
    let last_input = trace
        .events
        .iter()
        .rev()
        .find(|e| matches!(e.kind, EventKind::Append { .. } | EventKind::AppendBottom { .. }))
        .map(|e| e.t);
    let end_t = trace.events.last().map_or(0, |e| e.t);
    let cutoff_t = if quiescent { end_t } else { last_input.unwrap_or(end_t) };

    let mut commands = Vec::new();
    let mut index: HashMap<CommandId, usize> = HashMap::new();
    let mut issue_basis: HashMap<CommandId, &[CommandId]> = HashMap::new();
    let mut snapshots = Vec::new();
    for e in &trace.events {
        match &e.kind {
            EventKind::Append { id, basis, .. } => {
                index.insert(*id, commands.len());
                issue_basis.insert(*id, basis);
                commands.push(CommandStability {
                    id: *id,
                    issued_t: e.t,
                    issued_vt: e.vt,
                    stabilized_t: None,
                    stable_position: None,
                    basis_kept: None,
                    revocations: 0,
                });
            }
            EventKind::History { replica, history } => snapshots.push(Snapshot { replica: *replica, history }),
            _ => {}
        }
    }

    // Revocations: basis changes between consecutive histories of a replica,
    // and at the issuer between the append and the first history holding it.
    let mut replicas: BTreeMap<ReplicaId, ReplicaStability> = trace
        .scenario()
        .replicas()
        .map(|r| {
            let stats = ReplicaStability {
                replica: r,
                correct: correct.contains(&r),
                snapshots: 0,
                revocations: 0,
                stable_commands: 0,
                never_revoked: 0,
            };
            (r, stats)
        })
        .collect();
    let mut previous: HashMap<ReplicaId, &[CommandId]> = HashMap::new();
    let mut own_seen: HashMap<ReplicaId, u64> = HashMap::new();
    for s in &snapshots {
        let stats = replicas.get_mut(&s.replica).expect("replica in range");
        stats.snapshots += 1;
        let prev = previous.insert(s.replica, s.history).unwrap_or(&[]);
        let p = common_prefix_len(prev, s.history);
        for id in &prev[p..] {
            stats.revocations += 1;
            commands[index[id]].revocations += 1;
        }
        let seen = own_seen.entry(s.replica).or_default();
        for (pos, id) in s.history.iter().enumerate().skip(p) {
            if id.issuer != s.replica || id.seq <= *seen {
                continue;
            }
            *seen = (*seen).max(id.seq);
            let basis = issue_basis[id];
            if pos != basis.len() || common_prefix_len(basis, s.history) < pos {
                stats.revocations += 1;
                commands[index[id]].revocations += 1;
            }
        }
    }

    // The final history of the lowest correct replica is in every set whose
    // common prefix we take, so that prefix is min over members of their
    // common prefix with it.
    let lowest = correct.iter().next().copied();
    let reference: &[CommandId] = snapshots.iter().rev().find(|s| Some(s.replica) == lowest).map_or(&[], |s| s.history);
    let agree: Vec<usize> = snapshots
        .iter()
        .map(|s| if correct.contains(&s.replica) { common_prefix_len(reference, s.history) } else { usize::MAX })
        .collect();
    let mut later_min = vec![usize::MAX; snapshots.len() + 1];
    for i in (0..snapshots.len()).rev() {
        later_min[i] = later_min[i + 1].min(agree[i]);
    }

    let mut current: BTreeMap<ReplicaId, usize> = correct.iter().map(|&r| (r, 0)).collect();
    let mut curve = Vec::new();
    let mut issued = 0;
    let mut stable = 0;
    let mut next_snapshot = 0;
    for e in trace.events.iter().take_while(|e| e.t <= cutoff_t) {
        match &e.kind {
            EventKind::Append { .. } => issued += 1,
            EventKind::History { replica, .. } => {
                let i = next_snapshot;
                next_snapshot += 1;
                if let Some(c) = current.get_mut(replica) {
                    *c = agree[i];
                }
                let now = current.values().copied().min().unwrap_or(0).min(later_min[i + 1]).min(reference.len());
                for (pos, id) in reference.iter().enumerate().take(now).skip(stable) {
                    let c = &mut commands[index[id]];
                    c.stabilized_t = Some(e.t);
                    c.stable_position = Some(pos);
                    let basis = issue_basis[id];
                    c.basis_kept = Some(basis.len() == pos && common_prefix_len(basis, reference) >= pos);
                }
                stable = stable.max(now);
                curve.push(CurvePoint { t: e.t, vt: e.vt, issued, stable: now });
            }
            _ => {}
        }
    }

    for c in &commands {
        let stats = replicas.get_mut(&c.id.issuer).expect("issuer in range");
        stats.stable_commands += usize::from(c.stabilized_t.is_some());
        stats.never_revoked += usize::from(c.revocations == 0);
    }

    StabilityReport {
        quiescent,
        cutoff_t,
        curve,
        stable_prefix: reference[..stable].to_vec(),
        commands,
        replicas: replicas.into_values().collect(),
    }
}
