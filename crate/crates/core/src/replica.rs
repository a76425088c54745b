//! The replica automaton: local appends, causal delivery of remote vertices,
//! and history recomputation through a reconciliation function.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::broadcast::BroadcastMessage;
use crate::dag::{Command, CommandDag, CommandId, DagError, History, ReplicaId, Vertex};
use crate::datatype::{replay, DataType, Response};
use crate::reconcile::ReconcileFn;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplicaError {
    #[error("{0} delivered twice")]
    AlreadyKnown(CommandId),
    #[error("{0} would be inserted before its predecessor in program order")]
    SequenceGap(CommandId),
    #[error(transparent)]
    Dag(#[from] DagError),
}

/// Result of a successful local append.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issued<O> {
    pub command: CommandId,
    pub response: Response,
    /// Local history right before the append.
    pub basis: History<O>,
    /// To be handed to the broadcast layer.
    pub message: BroadcastMessage<O>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AppendOutcome<O> {
    Issued(Issued<O>),
    /// The operation is disabled in the local state; nothing was issued.
    Bottom,
    /// Crashed replicas take no steps.
    Crashed,
}

impl<O> AppendOutcome<O> {
    pub fn response(&self) -> Option<Response> {
        match self {
            AppendOutcome::Issued(issued) => Some(issued.response),
            AppendOutcome::Bottom => Some(Response::Bottom),
            AppendOutcome::Crashed => None,
        }
    }
}

/// A vertex inserted into the local DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Insertion {
    pub id: CommandId,
    pub parents: BTreeSet<Vertex>,
    pub dist: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeliverOutcome {
    /// The delivered vertex and any pending vertices it unblocked, in
    /// insertion order.
    Inserted(Vec<Insertion>),
    /// Some parents are still unknown; the message waits for them.
    Parked {
        missing: Vec<CommandId>,
    },
    Ignored,
}

#[derive(Debug, Clone)]
struct Parked<O> {
    message: BroadcastMessage<O>,
    missing: usize,
}

/// Messages waiting for parents, indexed by the parents they wait for.
#[derive(Debug, Clone)]
struct Pending<O> {
    parked: BTreeMap<CommandId, Parked<O>>,
    waiting_on: BTreeMap<CommandId, Vec<CommandId>>,
}

impl<O> Default for Pending<O> {
    fn default() -> Self {
        Self { parked: BTreeMap::new(), waiting_on: BTreeMap::new() }
    }
}

pub struct Replica<D: DataType> {
    id: ReplicaId,
    datatype: D,
    recon: ReconcileFn,
    dag: CommandDag<D::Op>,
    history: History<D::Op>,
    next_seq: u64,
    pending: Pending<D::Op>,
    crashed: bool,
    /// State after replaying the history with these ids.
    replayed: (Vec<CommandId>, D::State),
}

impl<D: DataType> Replica<D> {
    pub fn new(id: ReplicaId, datatype: D, recon: ReconcileFn) -> Self {
        let initial = datatype.initial_state();
        Self {
            id,
            datatype,
            recon,
            dag: CommandDag::new(),
            history: History::new(),
            next_seq: 1,
            pending: Pending::default(),
            crashed: false,
            replayed: (Vec::new(), initial),
        }
    }

    pub fn id(&self) -> ReplicaId {
        self.id
    }

    pub fn recon(&self) -> ReconcileFn {
        self.recon
    }

    pub fn dag(&self) -> &CommandDag<D::Op> {
        &self.dag
    }

    pub fn history(&self) -> &History<D::Op> {
        &self.history
    }

    /// Snapshot of the local history.
    pub fn history_of(&self) -> History<D::Op> {
        self.history.clone()
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn pending_len(&self) -> usize {
        self.pending.parked.len()
    }

    pub fn is_crashed(&self) -> bool {
        self.crashed
    }

    /// Stops the replica permanently.
    pub fn crash(&mut self) {
        self.crashed = true;
    }

    /// State obtained by replaying the local history.
    ///
    /// The last replay is cached; when the current history extends it only
    /// the new suffix is applied.
    pub fn current_state(&mut self) -> &D::State {
        self.refresh_replay();
        &self.replayed.1
    }

    fn refresh_replay(&mut self) {
        let ids = self.history.ids();
        let (cached_ids, cached_state) = &mut self.replayed;
        if !ids.starts_with(cached_ids) {
            *cached_state = self.datatype.initial_state();
            cached_ids.clear();
        }
        for command in &self.history[cached_ids.len()..] {
            *cached_state = self.datatype.apply(cached_state, &command.op).0;
        }
        *cached_ids = ids;
    }

    /// Issues `op` if it is enabled in the local state.
    ///
    /// Never waits for other replicas: the new vertex is in the local DAG and
    /// history when this returns.
    pub fn append(&mut self, op: D::Op) -> AppendOutcome<D::Op> {
        if self.crashed {
            return AppendOutcome::Crashed;
        }
        self.refresh_replay();
        if self.datatype.apply(&self.replayed.1, &op).1.is_bottom() {
            return AppendOutcome::Bottom;
        }

        let parents = self.dag.leaves();
        let command = Command::new(op, self.id, self.next_seq);
        let id = command.id();
        self.next_seq += 1;
        self.dag.insert(command.clone(), parents.clone()).expect("leaves are present and the sequence number is fresh");
        let basis = std::mem::take(&mut self.history);
        self.history = self.recon.order(&self.dag);

        let position = self.history.position(id).expect("reconciliation is total");
        let response = self.response_at(position);
        AppendOutcome::Issued(Issued {
            command: id,
            response,
            basis,
            message: BroadcastMessage { vertex: command, parents },
        })
    }

    fn response_at(&self, position: usize) -> Response {
        let ids = self.history.ids();
        let (cached_ids, cached_state) = &self.replayed;
        if ids[..position].starts_with(cached_ids) {
            let mut state = cached_state.clone();
            for command in &self.history[cached_ids.len()..position] {
                state = self.datatype.apply(&state, &command.op).0;
            }
            self.datatype.apply(&state, &self.history[position].op).1
        } else {
            let (_, responses) = replay(&self.datatype, self.history[..=position].iter().map(|c| &c.op));
            responses[position]
        }
    }

    /// Handles an r-delivered `⟨v, parents⟩` from another replica.
    ///
    /// The vertex is inserted once all its parents are known; until then it
    /// is parked. Inserting a vertex releases every parked vertex whose last
    /// missing parent it was, transitively. The history is recomputed once,
    /// after the cascade.
    pub fn on_deliver(&mut self, message: BroadcastMessage<D::Op>) -> Result<DeliverOutcome, ReplicaError> {
        if self.crashed {
            return Ok(DeliverOutcome::Ignored);
        }
        let id = message.vertex.id();
        if self.dag.contains(id) || self.pending.parked.contains_key(&id) {
            return Err(ReplicaError::AlreadyKnown(id));
        }
        let missing: Vec<CommandId> =
            message.parents.iter().filter_map(|p| p.command()).filter(|&p| !self.dag.contains(p)).collect();
        if !missing.is_empty() {
            for &parent in &missing {
                self.pending.waiting_on.entry(parent).or_default().push(id);
            }
            self.pending.parked.insert(id, Parked { message, missing: missing.len() });
            return Ok(DeliverOutcome::Parked { missing });
        }

        let mut inserted = Vec::new();
        let mut ready = vec![message];
        while let Some(message) = ready.pop() {
            let id = message.vertex.id();
            self.insert_remote(message, &mut inserted)?;
            for waiter in self.pending.waiting_on.remove(&id).unwrap_or_default() {
                let parked = self.pending.parked.get_mut(&waiter).expect("waiter is parked");
                parked.missing -= 1;
                if parked.missing == 0 {
                    let parked = self.pending.parked.remove(&waiter).expect("waiter is parked");
                    ready.push(parked.message);
                }
            }
        }
        self.history = self.recon.order(&self.dag);
        Ok(DeliverOutcome::Inserted(inserted))
    }

    fn insert_remote(
        &mut self,
        message: BroadcastMessage<D::Op>,
        inserted: &mut Vec<Insertion>,
    ) -> Result<(), ReplicaError> {
        let id = message.vertex.id();
        if id.seq > 1 && !self.dag.contains(CommandId { seq: id.seq - 1, ..id }) {
            return Err(ReplicaError::SequenceGap(id));
        }
        self.dag.insert(message.vertex, message.parents.clone())?;
        inserted.push(Insertion { id, dist: self.dag.dist(id.into())?, parents: message.parents });
        Ok(())
    }
}
