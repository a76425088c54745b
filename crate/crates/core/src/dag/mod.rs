//! The command DAG collaboratively built by the replicas.
//!
//! Vertices are commands, edges point from a parent to the commands issued
//! with it as a leaf. A synthetic root precedes every command and never
//! shows up in pasts or histories. Distances and ancestor sets are computed
//! once at insertion: a vertex's parent set never changes afterwards, so
//! neither do they.

mod fixture;

pub use fixture::FixtureError;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Display};
use std::ops::Deref;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a replica (process), `1..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplicaId(pub u32);

impl Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `(issuer, seq)`: unique identity of a command within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(ReplicaId, u64)", into = "(ReplicaId, u64)")]
pub struct CommandId {
    pub issuer: ReplicaId,
    pub seq: u64,
}

impl CommandId {
    pub fn new(issuer: u32, seq: u64) -> Self {
        Self { issuer: ReplicaId(issuer), seq }
    }
}

impl From<(ReplicaId, u64)> for CommandId {
    fn from((issuer, seq): (ReplicaId, u64)) -> Self {
        Self { issuer, seq }
    }
}

impl From<CommandId> for (ReplicaId, u64) {
    fn from(id: CommandId) -> Self {
        (id.issuer, id.seq)
    }
}

impl Display for CommandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.issuer, self.seq)
    }
}

/// An issued operation: `(op, issuer, seq)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Command<O> {
    pub op: O,
    pub issuer: ReplicaId,
    pub seq: u64,
}

impl<O> Command<O> {
    pub fn new(op: O, issuer: ReplicaId, seq: u64) -> Self {
        Self { op, issuer, seq }
    }

    pub fn id(&self) -> CommandId {
        CommandId { issuer: self.issuer, seq: self.seq }
    }
}

impl<O: Display> Display for Command<O> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.op, self.issuer, self.seq)
    }
}

/// A DAG vertex: the synthetic root or a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Option<CommandId>", into = "Option<CommandId>")]
pub enum Vertex {
    Root,
    Command(CommandId),
}

impl Vertex {
    pub fn command(self) -> Option<CommandId> {
        match self {
            Vertex::Root => None,
            Vertex::Command(id) => Some(id),
        }
    }
}

impl From<CommandId> for Vertex {
    fn from(id: CommandId) -> Self {
        Vertex::Command(id)
    }
}

impl From<Option<CommandId>> for Vertex {
    fn from(id: Option<CommandId>) -> Self {
        id.map_or(Vertex::Root, Vertex::Command)
    }
}

impl From<Vertex> for Option<CommandId> {
    fn from(v: Vertex) -> Self {
        v.command()
    }
}

impl Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vertex::Root => f.write_str("root"),
            Vertex::Command(id) => id.fmt(f),
        }
    }
}

/// A finite sequence of distinct commands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct History<O>(Vec<Command<O>>);

impl<O> History<O> {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn ids(&self) -> Vec<CommandId> {
        self.0.iter().map(Command::id).collect()
    }

    pub fn position(&self, id: CommandId) -> Option<usize> {
        self.0.iter().position(|c| c.id() == id)
    }

    pub fn ops(&self) -> impl Iterator<Item = &O> {
        self.0.iter().map(|c| &c.op)
    }

    pub fn into_vec(self) -> Vec<Command<O>> {
        self.0
    }
}

impl<O> Default for History<O> {
    fn default() -> Self {
        Self::new()
    }
}

impl<O> Deref for History<O> {
    type Target = [Command<O>];

    fn deref(&self) -> &[Command<O>] {
        &self.0
    }
}

impl<O> From<Vec<Command<O>>> for History<O> {
    fn from(commands: Vec<Command<O>>) -> Self {
        Self(commands)
    }
}

impl<O> FromIterator<Command<O>> for History<O> {
    fn from_iter<I: IntoIterator<Item = Command<O>>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl<'a, O> IntoIterator for &'a History<O> {
    type Item = &'a Command<O>;
    type IntoIter = std::slice::Iter<'a, Command<O>>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DagError {
    #[error("parent {parent} of {vertex} is not in the DAG")]
    MissingParent { vertex: CommandId, parent: CommandId },
    #[error("{0} is already in the DAG")]
    DuplicateVertex(CommandId),
    #[error("{0} has an empty parent set")]
    EmptyParents(CommandId),
    #[error("{0} is not in the DAG")]
    UnknownVertex(CommandId),
}

#[derive(Debug, Clone)]
struct Node<O> {
    command: Command<O>,
    parents: BTreeSet<Vertex>,
    children: Vec<usize>,
    dist: u32,
    /// Local indices of all strict ancestors (root excluded).
    ancestors: FixedBitSet,
}

/// Command DAG with cached distances and ancestor sets.
///
/// Vertices are stored in local insertion order; that order is not part of
/// the DAG's identity (`==` compares vertices, parents and operations only).
#[derive(Debug, Clone)]
pub struct CommandDag<O> {
    nodes: Vec<Node<O>>,
    index: HashMap<CommandId, usize>,
    root_children: usize,
    /// Per issuer, local indices sorted by sequence number.
    by_issuer: BTreeMap<ReplicaId, Vec<usize>>,
    /// `level_sizes[d]` = number of vertices at distance `d` (index 0 unused).
    level_sizes: Vec<usize>,
}

impl<O> Default for CommandDag<O> {
    fn default() -> Self {
        Self {
            nodes: Vec::new(),
            index: HashMap::new(),
            root_children: 0,
            by_issuer: BTreeMap::new(),
            level_sizes: vec![0],
        }
    }
}

impl<O> CommandDag<O> {
    /// The root-only DAG.
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of commands (the root is not counted).
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: CommandId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn contains_vertex(&self, v: Vertex) -> bool {
        v.command().map_or(true, |id| self.contains(id))
    }

    pub fn command(&self, id: CommandId) -> Option<&Command<O>> {
        self.index.get(&id).map(|&i| &self.nodes[i].command)
    }

    pub fn parents(&self, id: CommandId) -> Option<&BTreeSet<Vertex>> {
        self.index.get(&id).map(|&i| &self.nodes[i].parents)
    }

    /// Commands in local insertion order.
    pub fn commands(&self) -> impl DoubleEndedIterator<Item = &Command<O>> + ExactSizeIterator {
        self.nodes.iter().map(|n| &n.command)
    }

    pub fn ids(&self) -> impl DoubleEndedIterator<Item = CommandId> + ExactSizeIterator + '_ {
        self.nodes.iter().map(|n| n.command.id())
    }

    /// Issuers that have at least one command in the DAG, ascending.
    pub fn issuers(&self) -> impl Iterator<Item = ReplicaId> + '_ {
        self.by_issuer.keys().copied()
    }

    /// Adds `command` with an edge from every vertex in `parents`.
    pub fn insert(&mut self, command: Command<O>, parents: BTreeSet<Vertex>) -> Result<(), DagError> {
        let id = command.id();
        if self.contains(id) {
            return Err(DagError::DuplicateVertex(id));
        }
        if parents.is_empty() {
            return Err(DagError::EmptyParents(id));
        }
        let mut parent_indices = Vec::with_capacity(parents.len());
        let mut dist = 0;
        for parent in &parents {
            match parent {
                Vertex::Root => {}
                Vertex::Command(p) => {
                    let &pi = self.index.get(p).ok_or(DagError::MissingParent { vertex: id, parent: *p })?;
                    dist = dist.max(self.nodes[pi].dist);
                    parent_indices.push(pi);
                }
            }
        }
        let dist = dist + 1;
        let idx = self.nodes.len();
        let mut ancestors = FixedBitSet::with_capacity(idx);
        for &pi in &parent_indices {
            ancestors.union_with(&self.nodes[pi].ancestors);
            ancestors.insert(pi);
            self.nodes[pi].children.push(idx);
        }
        if parents.contains(&Vertex::Root) {
            self.root_children += 1;
        }
        let chain = self.by_issuer.entry(id.issuer).or_default();
        let at = chain.partition_point(|&i| self.nodes[i].command.seq < id.seq);
        chain.insert(at, idx);
        if self.level_sizes.len() <= dist as usize {
            self.level_sizes.resize(dist as usize + 1, 0);
        }
        self.level_sizes[dist as usize] += 1;
        self.index.insert(id, idx);
        self.nodes.push(Node { command, parents, children: Vec::new(), dist, ancestors });
        Ok(())
    }

    /// Value-style insertion: returns a new DAG and leaves `self` untouched.
    pub fn with_vertex(&self, command: Command<O>, parents: BTreeSet<Vertex>) -> Result<Self, DagError>
    where
        O: Clone,
    {
        let mut next = self.clone();
        next.insert(command, parents)?;
        Ok(next)
    }

    /// Vertices without outgoing edges; `{root}` for the root-only DAG.
    pub fn leaves(&self) -> BTreeSet<Vertex> {
        if self.nodes.is_empty() {
            return BTreeSet::from([Vertex::Root]);
        }
        self.nodes.iter().filter(|n| n.children.is_empty()).map(|n| Vertex::Command(n.command.id())).collect()
    }

    /// Causal past of `id`: the command itself and every command with a path
    /// to it. The root is excluded.
    pub fn past(&self, id: CommandId) -> Result<BTreeSet<CommandId>, DagError> {
        let i = self.local_index(id)?;
        let mut past: BTreeSet<CommandId> =
            self.nodes[i].ancestors.ones().map(|a| self.nodes[a].command.id()).collect();
        past.insert(id);
        Ok(past)
    }

    /// Greatest path length from the root.
    pub fn dist(&self, v: Vertex) -> Result<u32, DagError> {
        match v {
            Vertex::Root => Ok(0),
            Vertex::Command(id) => Ok(self.nodes[self.local_index(id)?].dist),
        }
    }

    /// `true` iff there is a non-empty path from `from` to `to`.
    pub fn reaches(&self, from: CommandId, to: CommandId) -> Result<bool, DagError> {
        let f = self.local_index(from)?;
        let t = self.local_index(to)?;
        Ok(self.nodes[t].ancestors.contains(f))
    }

    /// Number of vertices at each distance; index 0 stands for the root level.
    pub fn level_sizes(&self) -> &[usize] {
        &self.level_sizes
    }

    /// Deterministic topological sort of `subset`: ascending
    /// `(dist, issuer, seq)`. Distances strictly increase along every path,
    /// so the order respects paths that leave the subset as well.
    pub fn topo_sort<I>(&self, subset: I) -> Result<History<O>, DagError>
    where
        I: IntoIterator<Item = CommandId>,
        O: Clone,
    {
        let mut indices = subset.into_iter().map(|id| self.local_index(id)).collect::<Result<Vec<_>, _>>()?;
        indices.sort_unstable_by_key(|&i| self.sort_key(i));
        indices.dedup();
        Ok(indices.into_iter().map(|i| self.nodes[i].command.clone()).collect())
    }

    /// Recomputes every distance from scratch by a pass in insertion order.
    pub fn recompute_distances(&self) -> BTreeMap<CommandId, u32> {
        let mut dist: BTreeMap<CommandId, u32> = BTreeMap::new();
        for node in &self.nodes {
            let d = node.parents.iter().map(|p| p.command().map_or(0, |id| dist[&id])).max().unwrap_or(0);
            dist.insert(node.command.id(), d + 1);
        }
        dist
    }

    fn local_index(&self, id: CommandId) -> Result<usize, DagError> {
        self.index.get(&id).copied().ok_or(DagError::UnknownVertex(id))
    }

    // Index-level accessors used by the reconciliation functions.

    pub(crate) fn sort_key(&self, i: usize) -> (u32, ReplicaId, u64) {
        let n = &self.nodes[i];
        (n.dist, n.command.issuer, n.command.seq)
    }

    pub(crate) fn node_command(&self, i: usize) -> &Command<O> {
        &self.nodes[i].command
    }

    pub(crate) fn node_ancestors(&self, i: usize) -> &FixedBitSet {
        &self.nodes[i].ancestors
    }

    pub(crate) fn chain(&self, issuer: ReplicaId) -> &[usize] {
        self.by_issuer.get(&issuer).map_or(&[], Vec::as_slice)
    }
}

impl<O: PartialEq> PartialEq for CommandDag<O> {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self.nodes.iter().all(|n| {
                other.index.get(&n.command.id()).is_some_and(|&j| {
                    let m = &other.nodes[j];
                    m.command == n.command && m.parents == n.parents
                })
            })
    }
}

impl<O: Eq> Eq for CommandDag<O> {}
