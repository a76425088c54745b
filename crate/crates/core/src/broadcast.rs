//! Eager reliable broadcast.
//!
//! The first receipt of a broadcast instance is forwarded to every other
//! replica before it is delivered locally, so a message delivered by any
//! correct replica reaches all correct replicas even if its origin crashes
//! mid-broadcast. Later receipts of the same instance are dropped.
//!
//! The layer is a pure state machine: it returns the sends it wants and the
//! caller (the simulator) owns the channels.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::dag::{Command, CommandId, ReplicaId, Vertex};

/// `⟨v, parents⟩` as disseminated by a replica after appending `v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BroadcastMessage<O> {
    pub vertex: Command<O>,
    pub parents: BTreeSet<Vertex>,
}

/// Identity of a broadcast instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Uid {
    pub origin: ReplicaId,
    pub vertex: CommandId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope<O> {
    pub origin: ReplicaId,
    pub payload: BroadcastMessage<O>,
}

impl<O> Envelope<O> {
    pub fn uid(&self) -> Uid {
        Uid { origin: self.origin, vertex: self.payload.vertex.id() }
    }
}

/// A point-to-point send requested by the broadcast layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing<O> {
    pub dst: ReplicaId,
    pub envelope: Envelope<O>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Receipt<O> {
    /// First receipt: forward, then r-deliver `message`.
    Deliver {
        message: BroadcastMessage<O>,
        forwards: Vec<Outgoing<O>>,
    },
    Duplicate,
    /// The local replica has crashed.
    Ignored,
}

/// Per-replica broadcast endpoint. Replica ids are `1..=n`.
#[derive(Debug, Clone)]
pub struct ReliableBroadcast {
    me: ReplicaId,
    n: u32,
    seen: HashSet<Uid>,
    crashed: bool,
}

impl ReliableBroadcast {
    pub fn new(me: ReplicaId, n: u32) -> Self {
        Self { me, n, seen: HashSet::new(), crashed: false }
    }

    pub fn crash(&mut self) {
        self.crashed = true;
    }

    pub fn is_crashed(&self) -> bool {
        self.crashed
    }

    pub fn has_seen(&self, uid: &Uid) -> bool {
        self.seen.contains(uid)
    }

    fn others(&self) -> impl Iterator<Item = ReplicaId> + '_ {
        (1..=self.n).map(ReplicaId).filter(move |&r| r != self.me)
    }

    /// `r_broadcast(m)`. The sender's own delivery happens synchronously in
    /// the append that produced `m`, so the uid is only marked as seen here.
    /// Returns one send per other replica.
    pub fn broadcast<O: Clone>(&mut self, message: BroadcastMessage<O>) -> Vec<Outgoing<O>> {
        if self.crashed {
            return Vec::new();
        }
        let envelope = Envelope { origin: self.me, payload: message };
        self.seen.insert(envelope.uid());
        self.others().map(|dst| Outgoing { dst, envelope: envelope.clone() }).collect()
    }

    /// Handles a channel receipt.
    pub fn receive<O: Clone>(&mut self, envelope: Envelope<O>) -> Receipt<O> {
        if self.crashed {
            return Receipt::Ignored;
        }
        if !self.seen.insert(envelope.uid()) {
            return Receipt::Duplicate;
        }
        let forwards = self.others().map(|dst| Outgoing { dst, envelope: envelope.clone() }).collect();
        Receipt::Deliver { message: envelope.payload, forwards }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn message(issuer: u32) -> BroadcastMessage<&'static str> {
        BroadcastMessage { vertex: Command::new("x", ReplicaId(issuer), 1), parents: BTreeSet::from([Vertex::Root]) }
    }

    #[test]
    fn broadcast_sends_to_every_other_replica() {
        let mut rb = ReliableBroadcast::new(ReplicaId(2), 4);
        let sends = rb.broadcast(message(2));
        let dsts: Vec<_> = sends.iter().map(|s| s.dst.0).collect();
        assert_eq!(dsts, vec![1, 3, 4]);
        // The sender never re-delivers its own message.
        assert_eq!(rb.receive(sends[0].envelope.clone()), Receipt::Duplicate);
    }

    #[test]
    fn first_receipt_forwards_then_delivers() {
        let env = ReliableBroadcast::new(ReplicaId(1), 3).broadcast(message(1)).remove(0).envelope;
        let mut rb = ReliableBroadcast::new(ReplicaId(2), 3);
        match rb.receive(env.clone()) {
            Receipt::Deliver { message: m, forwards } => {
                assert_eq!(m, message(1));
                assert_eq!(forwards.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(rb.receive(env), Receipt::Duplicate);
    }

    #[test]
    fn crashed_endpoint_ignores_everything() {
        let env = ReliableBroadcast::new(ReplicaId(1), 3).broadcast(message(1)).remove(0).envelope;
        let mut rb = ReliableBroadcast::new(ReplicaId(2), 3);
        rb.crash();
        assert_eq!(rb.receive(env.clone()), Receipt::Ignored);
        assert!(!rb.has_seen(&env.uid()));
        assert!(rb.broadcast(message(2)).is_empty());
    }
}
