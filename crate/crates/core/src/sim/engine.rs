//! Seeded discrete-event execution of a [`Scenario`].
//!
//! All randomness comes from one ChaCha stream seeded by the scenario, and
//! simultaneous actions run in scheduling order, so a scenario always yields
//! the same trace.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::broadcast::{Envelope, Outgoing, Receipt, ReliableBroadcast, Uid};
use crate::dag::ReplicaId;
use crate::datatype::{DataType, IntLog, Nfs};
use crate::replica::{AppendOutcome, DeliverOutcome, Replica};

use super::scenario::{ConfigError, Fault, Scenario, Workload};
use super::trace::{EventKind, StopReason, Trace, TraceEvent, TraceHeader, SCHEMA_VERSION};

/// Runs `scenario` with the data type it names.
pub fn run(scenario: &Scenario) -> Result<Trace, ConfigError> {
    scenario.validate()?;
    match scenario.datatype.as_str() {
        "nfs" => Ok(Simulation::new(scenario, Nfs)?.run()),
        "intlog" => Ok(Simulation::new(scenario, IntLog)?.run()),
        other => Err(ConfigError::UnknownDataType(other.to_owned())),
    }
}

enum Action<O> {
    /// `op` is `None` for randomly generated workloads.
    Issue {
        replica: ReplicaId,
        op: Option<O>,
    },
    Arrive {
        src: ReplicaId,
        dst: ReplicaId,
        envelope: Envelope<O>,
    },
    Crash(ReplicaId),
    PartitionStart(usize),
    PartitionEnd(usize),
}

struct Partition {
    links: BTreeSet<(ReplicaId, ReplicaId)>,
    start: u64,
    end: u64,
}

fn link(a: ReplicaId, b: ReplicaId) -> (ReplicaId, ReplicaId) {
    (a.min(b), a.max(b))
}

/// A running simulation. Use [`Simulation::run`] for the whole scenario, or
/// [`Simulation::run_until_done`] to keep access to the replicas.
pub struct Simulation<D: DataType> {
    scenario: Scenario,
    datatype: D,
    replicas: Vec<Replica<D>>,
    endpoints: Vec<ReliableBroadcast>,
    queue: BTreeMap<(u64, u64), Action<D::Op>>,
    scheduled: u64,
    partitions: Vec<Partition>,
    rng: ChaCha8Rng,
    now: u64,
    inputs_left: usize,
    issued_random: u64,
    handlers: Vec<u64>,
    unrecorded: Vec<bool>,
    events: Vec<TraceEvent>,
    stop: Option<StopReason>,
}

impl<D: DataType + Clone> Simulation<D> {
    pub fn new(scenario: &Scenario, datatype: D) -> Result<Self, ConfigError> {
        scenario.validate()?;
        let n = scenario.n;
        let mut sim = Simulation {
            scenario: scenario.clone(),
            replicas: scenario.replicas().map(|r| Replica::new(r, datatype.clone(), scenario.recon)).collect(),
            endpoints: scenario.replicas().map(|r| ReliableBroadcast::new(r, n)).collect(),
            datatype,
            queue: BTreeMap::new(),
            scheduled: 0,
            partitions: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            now: 0,
            inputs_left: 0,
            issued_random: 0,
            handlers: vec![0; n as usize],
            unrecorded: vec![false; n as usize],
            events: Vec::new(),
            stop: None,
        };

        for fault in &scenario.faults {
            match fault {
                Fault::Crash { replica, at } => sim.schedule(*at, Action::Crash(*replica)),
                Fault::Partition { links, start, end } => {
                    let index = sim.partitions.len();
                    sim.partitions.push(Partition {
                        links: links.iter().map(|&(a, b)| link(a, b)).collect(),
                        start: *start,
                        end: *end,
                    });
                    sim.schedule(*start, Action::PartitionStart(index));
                    sim.schedule(*end, Action::PartitionEnd(index));
                }
            }
        }

        match &scenario.workload {
            Workload::Explicit(ops) => {
                let mut ops = ops.clone();
                ops.sort_by_key(|op| op.at);
                for op in ops {
                    let parsed = op.op.parse::<D::Op>().map_err(|e| ConfigError::BadOperation {
                        replica: op.replica,
                        at: op.at,
                        reason: e.to_string(),
                    })?;
                    sim.schedule(op.at, Action::Issue { replica: op.replica, op: Some(parsed) });
                    sim.inputs_left += 1;
                }
            }
            Workload::Random { commands, gap, start } => {
                let mut at = *start;
                for _ in 0..*commands {
                    at += sim.rng.gen_range(gap.min..=gap.max);
                    let replica = ReplicaId(sim.rng.gen_range(1..=n));
                    sim.schedule(at, Action::Issue { replica, op: None });
                    sim.inputs_left += 1;
                }
            }
        }
        Ok(sim)
    }

    pub fn replicas(&self) -> &[Replica<D>] {
        &self.replicas
    }

    pub fn replica(&self, id: ReplicaId) -> &Replica<D> {
        &self.replicas[Self::slot(id)]
    }

    fn slot(id: ReplicaId) -> usize {
        id.0 as usize - 1
    }

    fn schedule(&mut self, at: u64, action: Action<D::Op>) {
        self.queue.insert((at, self.scheduled), action);
        self.scheduled += 1;
    }

    fn emit(&mut self, kind: EventKind) {
        let t = self.events.len() as u64;
        self.events.push(TraceEvent { t, vt: self.now, kind });
    }

    /// Runs to completion and returns the trace.
    pub fn run(mut self) -> Trace {
        self.run_until_done();
        self.into_trace()
    }

    /// Runs to completion, keeping the simulation around for inspection.
    pub fn run_until_done(&mut self) {
        if self.stop.is_some() {
            return;
        }
        let reason = loop {
            if self.inputs_left == 0 && !self.scenario.quiescence_flush {
                break StopReason::InputsDone;
            }
            if self.events.len() as u64 >= self.scenario.horizon {
                break StopReason::Horizon;
            }
            let Some(((at, _), action)) = self.queue.pop_first() else {
                break StopReason::Drained;
            };
            self.now = at;
            self.step(action);
        };
        for slot in 0..self.replicas.len() {
            if self.unrecorded[slot] && !self.replicas[slot].is_crashed() {
                self.record_history(slot);
            }
        }
        let in_flight = self.queue.values().filter(|a| matches!(a, Action::Arrive { .. })).count();
        self.emit(EventKind::End { reason, in_flight });
        self.stop = Some(reason);
    }

    pub fn into_trace(self) -> Trace {
        Trace { header: TraceHeader { schema: SCHEMA_VERSION, scenario: self.scenario }, events: self.events }
    }

    fn step(&mut self, action: Action<D::Op>) {
        match action {
            Action::Issue { replica, op } => {
                self.inputs_left -= 1;
                self.issue(replica, op);
            }
            Action::Arrive { src, dst, envelope } => self.arrive(src, dst, envelope),
            Action::Crash(replica) => self.crash(replica),
            Action::PartitionStart(index) => {
                let links = self.partitions[index].links.iter().copied().collect();
                self.emit(EventKind::PartitionStart { index, links });
            }
            Action::PartitionEnd(index) => self.emit(EventKind::PartitionEnd { index }),
        }
    }

    fn issue(&mut self, replica: ReplicaId, op: Option<D::Op>) {
        let slot = Self::slot(replica);
        if self.replicas[slot].is_crashed() {
            return;
        }
        let op = match op {
            Some(op) => op,
            None => {
                self.issued_random += 1;
                let state = self.replicas[slot].current_state().clone();
                self.datatype.random_op(&state, &mut self.rng, self.issued_random)
            }
        };
        let literal = op.to_string();
        match self.replicas[slot].append(op) {
            AppendOutcome::Crashed => {}
            AppendOutcome::Bottom => self.emit(EventKind::AppendBottom { replica, op: literal }),
            AppendOutcome::Issued(issued) => {
                let parents: Vec<_> = issued.message.parents.iter().copied().collect();
                let id = issued.command;
                self.emit(EventKind::Append {
                    replica,
                    id,
                    op: literal,
                    response: issued.response,
                    parents: parents.clone(),
                    basis: issued.basis.ids(),
                });
                let dist = self.replicas[slot].dag().dist(id.into()).expect("just inserted");
                self.emit(EventKind::Insert { replica, id, parents, dist });
                let sends = self.endpoints[slot].broadcast(issued.message);
                let uid = Uid { origin: replica, vertex: id };
                self.emit(EventKind::Deliver { replica, uid });
                self.send_all(replica, sends);
                self.after_handler(slot);
            }
        }
    }

    fn send_all(&mut self, src: ReplicaId, sends: Vec<Outgoing<D::Op>>) {
        for Outgoing { dst, envelope } in sends {
            let delay = self.rng.gen_range(self.scenario.delay.min..=self.scenario.delay.max);
            let arrive = self.now + delay;
            self.emit(EventKind::Send { src, dst, uid: envelope.uid(), arrive });
            self.schedule(arrive, Action::Arrive { src, dst, envelope });
        }
    }

    /// End of the partition that currently cuts `src`-`dst`, if any.
    fn cut_until(&self, src: ReplicaId, dst: ReplicaId) -> Option<u64> {
        let l = link(src, dst);
        self.partitions
            .iter()
            .filter(|p| p.start <= self.now && self.now < p.end && p.links.contains(&l))
            .map(|p| p.end)
            .max()
    }

    fn arrive(&mut self, src: ReplicaId, dst: ReplicaId, envelope: Envelope<D::Op>) {
        let slot = Self::slot(dst);
        let uid = envelope.uid();
        if self.replicas[slot].is_crashed() {
            self.emit(EventKind::Drop { src, dst, uid });
            return;
        }
        if let Some(until) = self.cut_until(src, dst) {
            self.emit(EventKind::Defer { src, dst, uid, until });
            self.schedule(until, Action::Arrive { src, dst, envelope });
            return;
        }
        match self.endpoints[slot].receive(envelope) {
            Receipt::Ignored => {}
            Receipt::Duplicate => self.emit(EventKind::Recv { src, dst, uid, duplicate: true }),
            Receipt::Deliver { message, forwards } => {
                self.emit(EventKind::Recv { src, dst, uid, duplicate: false });
                self.send_all(dst, forwards);
                self.emit(EventKind::Deliver { replica: dst, uid });
                let id = message.vertex.id();
                match self.replicas[slot].on_deliver(message) {
                    Ok(DeliverOutcome::Ignored) => {}
                    Ok(DeliverOutcome::Parked { missing }) => {
                        self.emit(EventKind::Park { replica: dst, id, missing });
                    }
                    Ok(DeliverOutcome::Inserted(inserted)) => {
                        for ins in inserted {
                            self.emit(EventKind::Insert {
                                replica: dst,
                                id: ins.id,
                                parents: ins.parents.into_iter().collect(),
                                dist: ins.dist,
                            });
                        }
                        self.after_handler(slot);
                    }
                    // Reliable broadcast suppresses duplicates and parents
                    // always precede children, so this is a bug.
                    Err(e) => panic!("replica {dst}: {e}"),
                }
            }
        }
    }

    fn crash(&mut self, replica: ReplicaId) {
        let slot = Self::slot(replica);
        self.replicas[slot].crash();
        self.endpoints[slot].crash();
        self.emit(EventKind::Crash { replica });
        let outgoing: Vec<_> = self
            .queue
            .iter()
            .filter_map(|(key, a)| match a {
                Action::Arrive { src, dst, envelope } if *src == replica => Some((*key, *dst, envelope.uid())),
                _ => None,
            })
            .collect();
        for (key, dst, uid) in outgoing {
            self.queue.remove(&key);
            self.emit(EventKind::Drop { src: replica, dst, uid });
        }
    }

    fn after_handler(&mut self, slot: usize) {
        self.handlers[slot] += 1;
        let every = u64::from(self.scenario.snapshot_every);
        if self.handlers[slot] % every == 0 || self.inputs_left == 0 {
            self.record_history(slot);
        } else {
            self.unrecorded[slot] = true;
        }
    }

    fn record_history(&mut self, slot: usize) {
        self.unrecorded[slot] = false;
        let replica = &self.replicas[slot];
        let kind = EventKind::History { replica: replica.id(), history: replica.history().ids() };
        self.emit(kind);
    }
}
