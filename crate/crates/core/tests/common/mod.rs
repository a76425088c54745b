//! Test-side DAG generators and oracles. Nothing here calls the library's
//! graph algorithms; only its plain data types are shared.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use ecsmr_core::dag::{Command, CommandDag, CommandId, ReplicaId, Vertex};
use rand::seq::SliceRandom;
use rand::Rng;

/// A DAG as a list of vertices with their parents, parents first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DagSpec {
    pub vertices: Vec<(CommandId, Vec<Vertex>)>,
}

impl DagSpec {
    pub fn ids(&self) -> Vec<CommandId> {
        self.vertices.iter().map(|(id, _)| *id).collect()
    }

    pub fn build(&self) -> CommandDag<()> {
        let mut dag = CommandDag::new();
        for (id, parents) in &self.vertices {
            dag.insert(Command::new((), id.issuer, id.seq), parents.iter().copied().collect())
                .expect("well-formed spec");
        }
        dag
    }

    fn parents_of(&self) -> HashMap<CommandId, Vec<CommandId>> {
        self.vertices.iter().map(|(id, ps)| (*id, ps.iter().filter_map(|p| p.command()).collect())).collect()
    }

    /// Same vertices and edges, in another parents-first order.
    pub fn shuffled<R: Rng>(&self, rng: &mut R) -> DagSpec {
        let parents = self.parents_of();
        let mut placed = HashSet::new();
        let mut rest = self.vertices.clone();
        let mut out = Vec::new();
        while !rest.is_empty() {
            let ready: Vec<usize> =
                (0..rest.len()).filter(|&i| parents[&rest[i].0].iter().all(|p| placed.contains(p))).collect();
            let pick = *ready.choose(rng).expect("acyclic");
            let v = rest.swap_remove(pick);
            placed.insert(v.0);
            out.push(v);
        }
        DagSpec { vertices: out }
    }
}

/// Causal past of every vertex, the vertex itself included.
pub fn oracle_past(spec: &DagSpec) -> HashMap<CommandId, BTreeSet<CommandId>> {
    fn visit(
        v: CommandId,
        parents: &HashMap<CommandId, Vec<CommandId>>,
        memo: &mut HashMap<CommandId, BTreeSet<CommandId>>,
    ) -> BTreeSet<CommandId> {
        if let Some(p) = memo.get(&v) {
            return p.clone();
        }
        let mut past = BTreeSet::from([v]);
        for &p in &parents[&v] {
            past.extend(visit(p, parents, memo));
        }
        memo.insert(v, past.clone());
        past
    }
    let parents = spec.parents_of();
    let mut memo = HashMap::new();
    for id in spec.ids() {
        visit(id, &parents, &mut memo);
    }
    memo
}

/// Longest path from the root, by relaxation to a fixpoint.
pub fn oracle_dist(spec: &DagSpec) -> HashMap<CommandId, u32> {
    let parents = spec.parents_of();
    let mut dist: HashMap<CommandId, u32> = spec.ids().into_iter().map(|id| (id, 1)).collect();
    loop {
        let mut changed = false;
        for (id, ps) in &parents {
            let want = 1 + ps.iter().map(|p| dist[p]).max().unwrap_or(0);
            if dist[id] < want {
                dist.insert(*id, want);
                changed = true;
            }
        }
        if !changed {
            return dist;
        }
    }
}

fn sort_by_level(ids: impl IntoIterator<Item = CommandId>, dist: &HashMap<CommandId, u32>) -> Vec<CommandId> {
    let mut ids: Vec<_> = ids.into_iter().collect();
    ids.sort_by_key(|id| (dist[id], id.issuer, id.seq));
    ids
}

/// Level by longest path, then issuer, then sequence number.
pub fn oracle_bfs(spec: &DagSpec) -> Vec<CommandId> {
    sort_by_level(spec.ids(), &oracle_dist(spec))
}

/// Straight-line transcription of the fair reconciliation loop: round robin
/// over the issuers present, restarting at the lowest; each turn takes the
/// smallest vertex of the issuer whose past covers everything ordered so
/// far and is not itself ordered yet; stop after a full idle round, then
/// append the rest.
pub fn oracle_fair(spec: &DagSpec) -> Vec<CommandId> {
    let past = oracle_past(spec);
    let dist = oracle_dist(spec);
    let issuers: Vec<ReplicaId> = spec.ids().iter().map(|id| id.issuer).collect::<BTreeSet<_>>().into_iter().collect();
    let mut seq: Vec<CommandId> = Vec::new();
    let mut in_seq: BTreeSet<CommandId> = BTreeSet::new();
    let mut turn = 0;
    'rounds: loop {
        for k in 0..issuers.len() {
            let j = issuers[(turn + k) % issuers.len()];
            let leader = spec
                .ids()
                .into_iter()
                .filter(|v| v.issuer == j && !in_seq.contains(v) && in_seq.is_subset(&past[v]))
                .min_by_key(|v| v.seq);
            if let Some(v) = leader {
                let update = sort_by_level(past[&v].difference(&in_seq).copied(), &dist);
                in_seq.extend(update.iter().copied());
                seq.extend(update);
                turn = (turn + k + 1) % issuers.len();
                continue 'rounds;
            }
        }
        break;
    }
    let rest = sort_by_level(spec.ids().into_iter().filter(|v| !in_seq.contains(v)), &dist);
    seq.extend(rest);
    seq
}

/// `true` if `order` lists each vertex of `spec` once, parents first.
pub fn is_topological(spec: &DagSpec, order: &[CommandId]) -> bool {
    let parents = spec.parents_of();
    let pos: HashMap<CommandId, usize> = order.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    pos.len() == order.len()
        && order.len() == spec.vertices.len()
        && parents.iter().all(|(v, ps)| pos.contains_key(v) && ps.iter().all(|p| pos[p] < pos[v]))
}

/// Every order of `subset` that puts each vertex after its ancestors in
/// `subset`.
pub fn all_topological_orders(spec: &DagSpec, subset: &BTreeSet<CommandId>) -> Vec<Vec<CommandId>> {
    fn extend(
        prefix: &mut Vec<CommandId>,
        left: &mut BTreeSet<CommandId>,
        before: &HashMap<CommandId, BTreeSet<CommandId>>,
        out: &mut Vec<Vec<CommandId>>,
    ) {
        if left.is_empty() {
            out.push(prefix.clone());
            return;
        }
        let ready: Vec<CommandId> = left.iter().copied().filter(|v| before[v].is_disjoint(left)).collect();
        for v in ready {
            left.remove(&v);
            prefix.push(v);
            extend(prefix, left, before, out);
            prefix.pop();
            left.insert(v);
        }
    }
    let past = oracle_past(spec);
    let before: HashMap<CommandId, BTreeSet<CommandId>> =
        subset.iter().map(|v| (*v, past[v].iter().filter(|p| *p != v).copied().collect())).collect();
    let mut out = Vec::new();
    extend(&mut Vec::new(), &mut subset.clone(), &before, &mut out);
    out
}

fn maximal(known: &BTreeSet<CommandId>, past: &HashMap<CommandId, BTreeSet<CommandId>>) -> Vec<Vertex> {
    let covered: BTreeSet<CommandId> =
        known.iter().flat_map(|v| past[v].iter().filter(move |p| *p != v)).copied().collect();
    let leaves: Vec<Vertex> = known.difference(&covered).map(|&v| v.into()).collect();
    if leaves.is_empty() {
        vec![Vertex::Root]
    } else {
        leaves
    }
}

/// A DAG as the protocol could build it: each issuer appends on top of the
/// leaves of what it has seen, and learns other vertices (with their whole
/// past) at random moments.
pub fn random_protocol_dag<R: Rng>(rng: &mut R, issuers: u32, vertices: usize) -> DagSpec {
    let mut known: Vec<BTreeSet<CommandId>> = vec![BTreeSet::new(); issuers as usize];
    let mut next_seq = vec![1u64; issuers as usize];
    let mut past: HashMap<CommandId, BTreeSet<CommandId>> = HashMap::new();
    let mut all: Vec<CommandId> = Vec::new();
    let mut out = Vec::new();
    while out.len() < vertices {
        let i = rng.gen_range(0..issuers as usize);
        let learn = rng.gen_range(0..=2);
        for _ in 0..learn {
            if let Some(&u) = all.choose(rng) {
                known[i].extend(past[&u].iter().copied());
            }
        }
        let id = CommandId::new(i as u32 + 1, next_seq[i]);
        next_seq[i] += 1;
        let parents = maximal(&known[i], &past);
        let mut p: BTreeSet<CommandId> = known[i].clone();
        p.insert(id);
        past.insert(id, p);
        known[i].insert(id);
        all.push(id);
        out.push((id, parents));
    }
    DagSpec { vertices: out }
}

/// Every protocol-shaped DAG with at most `max_vertices` vertices over
/// issuers `1..=issuers`, each listed once.
pub fn enumerate_dags(max_vertices: usize, issuers: u32) -> Vec<DagSpec> {
    #[derive(Clone)]
    struct Partial {
        spec: DagSpec,
        past: Vec<u32>,
    }
    let canonical = |spec: &DagSpec| -> Vec<(CommandId, BTreeSet<Vertex>)> {
        let mut v: Vec<_> = spec.vertices.iter().map(|(id, ps)| (*id, ps.iter().copied().collect())).collect();
        v.sort_by_key(|(id, _)| *id);
        v
    };
    let mut level = vec![Partial { spec: DagSpec { vertices: Vec::new() }, past: Vec::new() }];
    let mut out = Vec::new();
    for _ in 0..max_vertices {
        let mut seen = HashSet::new();
        let mut next = Vec::new();
        for p in &level {
            let k = p.spec.vertices.len();
            for i in 1..=issuers {
                let prev = p.spec.vertices.iter().rposition(|(id, _)| id.issuer.0 == i);
                let seq = prev.map_or(1, |at| p.spec.vertices[at].0.seq + 1);
                for mask in 0u32..(1 << k) {
                    if let Some(at) = prev {
                        if mask & (1 << at) == 0 {
                            continue;
                        }
                    }
                    let closed = (0..k).filter(|b| mask & (1 << b) != 0).all(|b| p.past[b] & !mask == 0);
                    if !closed {
                        continue;
                    }
                    let covered =
                        (0..k).filter(|b| mask & (1 << b) != 0).fold(0u32, |acc, b| acc | (p.past[b] & !(1 << b)));
                    let leaves: Vec<Vertex> = (0..k)
                        .filter(|b| mask & (1 << b) != 0 && covered & (1 << b) == 0)
                        .map(|b| p.spec.vertices[b].0.into())
                        .collect();
                    let parents = if leaves.is_empty() { vec![Vertex::Root] } else { leaves };
                    let mut q = p.clone();
                    q.spec.vertices.push((CommandId::new(i, seq), parents));
                    q.past.push(mask | (1 << k));
                    if seen.insert(canonical(&q.spec)) {
                        next.push(q);
                    }
                }
            }
        }
        out.extend(next.iter().map(|p| p.spec.clone()));
        level = next;
    }
    out
}

/// Issuers present, for convenience in assertions.
pub fn issuers(spec: &DagSpec) -> BTreeMap<ReplicaId, usize> {
    let mut m = BTreeMap::new();
    for (id, _) in &spec.vertices {
        *m.entry(id.issuer).or_default() += 1;
    }
    m
}
