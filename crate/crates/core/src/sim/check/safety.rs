//! Safety checks: every one must hold on every trace.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::broadcast::Uid;
use crate::dag::{Command, CommandDag, CommandId, ReplicaId, Vertex};

use super::super::trace::{EventKind, Trace};
use super::{correct_replicas, Status, Verdict};

/// Histories contain only issued commands, without repetition, and each
/// issuer numbers its commands 1, 2, 3, ... in issue order.
pub fn check_validity(trace: &Trace) -> Verdict {
    let mut violations = Vec::new();
    let mut issued: HashSet<CommandId> = HashSet::new();
    let mut last_seq: BTreeMap<ReplicaId, u64> = BTreeMap::new();
    let mut snapshots = 0usize;
    for e in &trace.events {
        match &e.kind {
            EventKind::Append { replica, id, .. } => {
                if id.issuer != *replica {
                    violations.push(format!("t={}: replica {replica} appended {id} under another issuer", e.t));
                }
                let expected = last_seq.get(&id.issuer).copied().unwrap_or(0) + 1;
                if id.seq != expected {
                    violations.push(format!("t={}: {id} issued, expected seq {expected}", e.t));
                }
                last_seq.insert(id.issuer, id.seq);
                issued.insert(*id);
            }
            EventKind::History { replica, history } => {
                snapshots += 1;
                let mut seen = HashSet::with_capacity(history.len());
                for id in history {
                    if !issued.contains(id) {
                        violations.push(format!("t={}: replica {replica} holds unissued {id}", e.t));
                    }
                    if !seen.insert(*id) {
                        violations.push(format!("t={}: replica {replica} holds {id} twice", e.t));
                    }
                }
            }
            _ => {}
        }
    }
    Verdict::from_violations("validity", violations, format!("{snapshots} snapshots, {} commands", issued.len()))
}

/// The command set of each replica's history never shrinks.
pub fn check_monotonicity(trace: &Trace) -> Verdict {
    let mut violations = Vec::new();
    let mut previous: HashMap<ReplicaId, HashSet<CommandId>> = HashMap::new();
    for e in &trace.events {
        if let EventKind::History { replica, history } = &e.kind {
            let current: HashSet<CommandId> = history.iter().copied().collect();
            if let Some(prev) = previous.get(replica) {
                if let Some(lost) = prev.iter().find(|id| !current.contains(id)) {
                    violations.push(format!("t={}: replica {replica} lost {lost}", e.t));
                }
            }
            previous.insert(*replica, current);
        }
    }
    Verdict::from_violations("monotonicity", violations, "")
}

/// An issued command is in its issuer's next recorded history.
pub fn check_wait_freedom(trace: &Trace) -> Verdict {
    let mut violations = Vec::new();
    let mut awaiting: BTreeMap<ReplicaId, Vec<(u64, CommandId)>> = BTreeMap::new();
    let mut count = 0usize;
    for e in &trace.events {
        match &e.kind {
            EventKind::Append { replica, id, .. } => {
                awaiting.entry(*replica).or_default().push((e.t, *id));
                count += 1;
            }
            EventKind::History { replica, history } => {
                for (t, id) in awaiting.remove(replica).unwrap_or_default() {
                    if !history.contains(&id) {
                        violations.push(format!("{id} issued at t={t} missing from the next history of {replica}"));
                    }
                }
            }
            _ => {}
        }
    }
    let crashed: BTreeSet<_> = trace
        .events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Crash { replica } => Some(replica),
            _ => None,
        })
        .collect();
    for (replica, pending) in awaiting {
        if !crashed.contains(&replica) {
            for (t, id) in pending {
                violations.push(format!("{id} issued at t={t} never recorded by {replica}"));
            }
        }
    }
    Verdict::from_violations("wait_freedom", violations, format!("{count} appends"))
}

/// Rebuilds each replica's DAG from its insert events and checks, at every
/// recorded history:
///
/// - `rf_totality`: the history is a permutation of the DAG's vertices;
/// - `recomputation`: the history equals the reconciliation function
///   applied to the DAG from scratch;
///
/// at every insert:
///
/// - `level_bound`: no distance level holds more than `n` vertices;
/// - `past_immutability`: every replica inserts a vertex with the parents
///   its issuer broadcast, and causal pasts agree across replicas at the end;
///
/// and at the end:
///
/// - `distance_immutability`: distances recorded at insertion equal a
///   from-scratch recomputation on the final DAG.
pub fn dag_checks(trace: &Trace) -> Vec<Verdict> {
    let scenario = trace.scenario();
    let n = scenario.n as usize;
    let recon = scenario.recon;
    let mut dags: BTreeMap<ReplicaId, CommandDag<()>> = scenario.replicas().map(|r| (r, CommandDag::new())).collect();
    let mut inserted_dist: BTreeMap<(ReplicaId, CommandId), u32> = BTreeMap::new();
    let mut broadcast_parents: HashMap<CommandId, BTreeSet<Vertex>> = HashMap::new();

    let mut totality = Vec::new();
    let mut recomputation = Vec::new();
    let mut level_bound = Vec::new();
    let mut past = Vec::new();
    let mut distance = Vec::new();

    for e in &trace.events {
        match &e.kind {
            EventKind::Append { id, parents, .. } => {
                broadcast_parents.insert(*id, parents.iter().copied().collect());
            }
            EventKind::Insert { replica, id, parents, dist } => {
                let parents: BTreeSet<Vertex> = parents.iter().copied().collect();
                match broadcast_parents.get(id) {
                    Some(sent) if *sent != parents => {
                        past.push(format!("t={}: replica {replica} inserted {id} with different parents", e.t))
                    }
                    None => past.push(format!("t={}: replica {replica} inserted unissued {id}", e.t)),
                    _ => {}
                }
                let dag = dags.get_mut(replica).expect("replica in range");
                if let Err(err) = dag.insert(Command::new((), id.issuer, id.seq), parents) {
                    totality.push(format!("t={}: replica {replica}: {err}", e.t));
                    continue;
                }
                let actual = dag.dist((*id).into()).expect("just inserted");
                if actual != *dist {
                    distance
                        .push(format!("t={}: replica {replica} recorded dist {dist} for {id}, DAG says {actual}", e.t));
                }
                inserted_dist.insert((*replica, *id), *dist);
                let level = dag.level_sizes()[actual as usize];
                if level > n {
                    level_bound.push(format!("t={}: replica {replica} has {level} vertices at distance {actual}", e.t));
                }
            }
            EventKind::History { replica, history } => {
                let dag = &dags[replica];
                let distinct: HashSet<_> = history.iter().collect();
                if history.len() != dag.len()
                    || distinct.len() != history.len()
                    || !history.iter().all(|id| dag.contains(*id))
                {
                    totality.push(format!(
                        "t={}: replica {replica} history has {} entries for {} vertices",
                        e.t,
                        history.len(),
                        dag.len()
                    ));
                }
                if recon.order(dag).ids() != *history {
                    recomputation.push(format!("t={}: replica {replica} history differs from {recon}(dag)", e.t));
                }
            }
            _ => {}
        }
    }

    for (replica, dag) in &dags {
        for (id, d) in dag.recompute_distances() {
            if inserted_dist.get(&(*replica, id)) != Some(&d) {
                distance.push(format!(
                    "replica {replica}: {id} now at distance {d}, recorded {:?}",
                    inserted_dist.get(&(*replica, id))
                ));
            }
        }
    }

    let mut reference: HashMap<CommandId, (ReplicaId, BTreeSet<CommandId>)> = HashMap::new();
    for (replica, dag) in &dags {
        for id in dag.ids() {
            let p = dag.past(id).expect("vertex of this DAG");
            match reference.get(&id) {
                Some((other, q)) if *q != p => {
                    past.push(format!("past({id}) differs between replicas {other} and {replica}"));
                }
                Some(_) => {}
                None => {
                    reference.insert(id, (*replica, p));
                }
            }
        }
    }

    vec![
        Verdict::from_violations("rf_totality", totality, ""),
        Verdict::from_violations("recomputation", recomputation, format!("against {recon}")),
        Verdict::from_violations("level_bound", level_bound, format!("n = {n}")),
        Verdict::from_violations("distance_immutability", distance, ""),
        Verdict::from_violations("past_immutability", past, ""),
    ]
}

fn deliveries(trace: &Trace) -> BTreeMap<Uid, Vec<(u64, ReplicaId)>> {
    let mut out: BTreeMap<Uid, Vec<(u64, ReplicaId)>> = BTreeMap::new();
    for e in &trace.events {
        if let EventKind::Deliver { replica, uid } = e.kind {
            out.entry(uid).or_default().push((e.t, replica));
        }
    }
    out
}

fn broadcasts(trace: &Trace) -> BTreeMap<Uid, u64> {
    trace
        .events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Append { replica, id, .. } => Some((Uid { origin: replica, vertex: id }, e.t)),
            _ => None,
        })
        .collect()
}

/// At most one delivery per replica and uid, and only of broadcast uids.
pub fn check_rb_integrity(trace: &Trace) -> Verdict {
    let sent = broadcasts(trace);
    let mut violations = Vec::new();
    for (uid, delivered) in deliveries(trace) {
        let mut by = BTreeSet::new();
        for (t, replica) in delivered {
            if !by.insert(replica) {
                violations.push(format!("t={t}: replica {replica} delivered {} twice", uid.vertex));
            }
            if sent.get(&uid).map_or(true, |&bt| bt > t) {
                violations.push(format!("t={t}: replica {replica} delivered {} before it was broadcast", uid.vertex));
            }
        }
    }
    Verdict::from_violations("rb_integrity", violations, "")
}

/// Every broadcaster delivers its own message.
pub fn check_rb_validity(trace: &Trace) -> Verdict {
    let delivered = deliveries(trace);
    let violations = broadcasts(trace)
        .into_keys()
        .filter(|uid| !delivered.get(uid).is_some_and(|d| d.iter().any(|&(_, r)| r == uid.origin)))
        .map(|uid| format!("{} not delivered by its sender", uid.vertex))
        .collect();
    Verdict::from_violations("rb_validity", violations, "")
}

/// In a quiescent trace, a uid delivered by one correct replica is
/// delivered by all of them.
pub fn check_rb_totality(trace: &Trace) -> Verdict {
    if !trace.is_quiescent() {
        return Verdict::new("rb_totality", Status::Indeterminate, "trace ends with messages in transit");
    }
    let correct = correct_replicas(trace);
    let mut violations = Vec::new();
    for (uid, delivered) in deliveries(trace) {
        let by: BTreeSet<_> = delivered.iter().map(|&(_, r)| r).collect();
        if by.iter().any(|r| correct.contains(r)) {
            for r in correct.difference(&by) {
                violations.push(format!("{} never delivered by correct replica {r}", uid.vertex));
            }
        }
    }
    Verdict::from_violations("rb_totality", violations, format!("{} correct replicas", correct.len()))
}

/// At most n² channel sends per broadcast.
pub fn check_message_complexity(trace: &Trace) -> Verdict {
    let n = u64::from(trace.scenario().n);
    let mut sends: BTreeMap<Uid, u64> = BTreeMap::new();
    for e in &trace.events {
        if let EventKind::Send { uid, .. } = e.kind {
            *sends.entry(uid).or_default() += 1;
        }
    }
    let max = sends.values().copied().max().unwrap_or(0);
    let violations = sends
        .into_iter()
        .filter(|&(_, count)| count > n * n)
        .map(|(uid, count)| format!("{} sent {count} times", uid.vertex))
        .collect();
    Verdict::from_violations(
        "message_complexity",
        violations,
        format!("max {max} sends per broadcast, bound {}", n * n),
    )
}
