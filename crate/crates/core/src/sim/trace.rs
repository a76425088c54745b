//! Trace events and their JSON-lines encoding.
//!
//! The first line is a [`TraceHeader`] carrying the schema version and the
//! effective scenario; every following line is one [`TraceEvent`].

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::broadcast::Uid;
use crate::dag::{CommandId, ReplicaId, Vertex};
use crate::datatype::Response;

use super::scenario::Scenario;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: u32,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// No scheduled action was left.
    Drained,
    /// The last input was processed and no flush was requested.
    InputsDone,
    Horizon,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// A locally successful append; `basis` is the history right before it.
    Append {
        replica: ReplicaId,
        id: CommandId,
        op: String,
        response: Response,
        parents: Vec<Vertex>,
        basis: Vec<CommandId>,
    },
    /// An append rejected locally with ⊥; nothing was issued.
    AppendBottom {
        replica: ReplicaId,
        op: String,
    },
    Insert {
        replica: ReplicaId,
        id: CommandId,
        parents: Vec<Vertex>,
        dist: u32,
    },
    /// A delivery postponed because some parents are not known yet.
    Park {
        replica: ReplicaId,
        id: CommandId,
        missing: Vec<CommandId>,
    },
    /// Reliable-broadcast delivery (at most once per replica and uid).
    Deliver {
        replica: ReplicaId,
        uid: Uid,
    },
    Send {
        src: ReplicaId,
        dst: ReplicaId,
        uid: Uid,
        arrive: u64,
    },
    /// Channel receipt, before duplicate suppression.
    Recv {
        src: ReplicaId,
        dst: ReplicaId,
        uid: Uid,
        duplicate: bool,
    },
    /// A receipt postponed by a partition.
    Defer {
        src: ReplicaId,
        dst: ReplicaId,
        uid: Uid,
        until: u64,
    },
    /// A message discarded because its sender or destination crashed.
    Drop {
        src: ReplicaId,
        dst: ReplicaId,
        uid: Uid,
    },
    History {
        replica: ReplicaId,
        history: Vec<CommandId>,
    },
    Crash {
        replica: ReplicaId,
    },
    PartitionStart {
        index: usize,
        links: Vec<(ReplicaId, ReplicaId)>,
    },
    PartitionEnd {
        index: usize,
    },
    End {
        reason: StopReason,
        /// Messages still in transit when the run stopped.
        in_flight: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Global step counter; strictly increasing.
    pub t: u64,
    /// Virtual time of the step.
    pub vt: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] io::Error),
    #[error("trace line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("empty trace")]
    Empty,
    #[error("unsupported trace schema {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn scenario(&self) -> &Scenario {
        &self.header.scenario
    }

    /// `true` if no message was in transit when the run stopped.
    pub fn is_quiescent(&self) -> bool {
        matches!(self.events.last().map(|e| &e.kind), Some(EventKind::End { in_flight: 0, .. }))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        for event in &self.events {
            serde_json::to_writer(&mut out, event)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, TraceError> {
        let mut lines = input.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(l) if l.trim().is_empty()));
        let (_, first) = lines.next().ok_or(TraceError::Empty)?;
        let header: TraceHeader =
            serde_json::from_str(&first?).map_err(|source| TraceError::Json { line: 1, source })?;
        if header.schema != SCHEMA_VERSION {
            return Err(TraceError::Schema(header.schema));
        }
        let mut events = Vec::new();
        for (n, line) in lines {
            let event = serde_json::from_str(&line?).map_err(|source| TraceError::Json { line: n + 1, source })?;
            events.push(event);
        }
        Ok(Trace { header, events })
    }
}
