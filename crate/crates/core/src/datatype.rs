//! Sequential data types replicated by the DAG framework.
//!
//! A data type is a deterministic transition function over states. An
//! operation that is not enabled in a state leaves the state untouched and
//! answers [`Response::Bottom`].

use std::collections::BTreeSet;
use std::fmt::{self, Debug, Display};
use std::hash::Hash;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Outcome of applying an operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Ok,
    Bottom,
}

impl Response {
    pub fn is_bottom(self) -> bool {
        matches!(self, Response::Bottom)
    }
}

impl Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Response::Ok => f.write_str("ok"),
            Response::Bottom => f.write_str("⊥"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse operation literal `{literal}`: {reason}")]
pub struct ParseOpError {
    pub literal: String,
    pub reason: &'static str,
}

impl ParseOpError {
    fn new(literal: &str, reason: &'static str) -> Self {
        Self { literal: literal.to_owned(), reason }
    }
}

/// A sequential data type `(Q, q0, O, R, σ)`.
///
/// Operations round-trip through a compact textual literal (`Display` /
/// `FromStr`) which is used by fixtures, scenario files and traces.
pub trait DataType {
    type State: Clone + PartialEq + Debug;
    type Op: Clone + Eq + Hash + Debug + Display + FromStr<Err = ParseOpError>;

    /// Name used to select the instance in scenario files.
    const NAME: &'static str;

    fn initial_state(&self) -> Self::State;

    /// The transition function σ. Must be deterministic, and must return the
    /// input state unchanged together with `Bottom` for disabled operations.
    fn apply(&self, state: &Self::State, op: &Self::Op) -> (Self::State, Response);

    /// Draws an operation that is enabled in `state`, for random workloads.
    /// `fresh` is a value unique to this call within a run.
    fn random_op<R: Rng + ?Sized>(&self, state: &Self::State, rng: &mut R, fresh: u64) -> Self::Op;
}

/// Folds `apply` over a sequence of operations starting from the initial
/// state, returning the final state and the positionally aligned responses.
pub fn replay<'a, D, I>(datatype: &D, ops: I) -> (D::State, Vec<Response>)
where
    D: DataType,
    D::Op: 'a,
    I: IntoIterator<Item = &'a D::Op>,
{
    let mut state = datatype.initial_state();
    let mut responses = Vec::new();
    for op in ops {
        let (next, response) = datatype.apply(&state, op);
        state = next;
        responses.push(response);
    }
    (state, responses)
}

// ---------------------------------------------------------------------------
// NFS directory tree

/// Directory-tree instance supporting `mkdir(path, name)` and `rmdir(path)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Nfs;

/// Set of absolute directory paths. Always contains `/` and is prefix-closed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NfsState {
    dirs: BTreeSet<String>,
}

impl NfsState {
    pub fn root() -> Self {
        Self { dirs: BTreeSet::from(["/".to_owned()]) }
    }

    /// Builds a state from a list of paths. Fails if the result would not be
    /// prefix-closed.
    pub fn from_paths<I, S>(paths: I) -> Option<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut state = Self::root();
        state.dirs.extend(paths.into_iter().map(Into::into));
        state.is_prefix_closed().then_some(state)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.dirs.contains(path)
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.dirs.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.len() == 1
    }

    fn has_children(&self, path: &str) -> bool {
        let prefix = child_prefix(path);
        self.dirs
            .range::<str, _>((std::ops::Bound::Included(prefix.as_str()), std::ops::Bound::Unbounded))
            .find(|p| p.as_str() != path)
            .is_some_and(|p| p.starts_with(&prefix))
    }

    pub fn is_prefix_closed(&self) -> bool {
        self.dirs.contains("/")
            && self.dirs.iter().all(|p| parent_path(p).map_or(true, |parent| self.dirs.contains(parent)))
    }
}

fn child_prefix(path: &str) -> String {
    if path == "/" {
        "/".to_owned()
    } else {
        format!("{path}/")
    }
}

fn join(path: &str, name: &str) -> String {
    format!("{}{name}", child_prefix(path))
}

fn parent_path(path: &str) -> Option<&str> {
    if path == "/" {
        return None;
    }
    match path.rfind('/') {
        Some(0) => Some("/"),
        Some(i) => Some(&path[..i]),
        None => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NfsOp {
    Mkdir { path: String, name: String },
    Rmdir { path: String },
}

impl NfsOp {
    pub fn mkdir(path: impl Into<String>, name: impl Into<String>) -> Self {
        NfsOp::Mkdir { path: path.into(), name: name.into() }
    }

    pub fn rmdir(path: impl Into<String>) -> Self {
        NfsOp::Rmdir { path: path.into() }
    }
}

impl Display for NfsOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NfsOp::Mkdir { path, name } => write!(f, "mkdir({path},{name})"),
            NfsOp::Rmdir { path } => write!(f, "rmdir({path})"),
        }
    }
}

fn valid_path(path: &str) -> bool {
    path == "/" || (path.starts_with('/') && !path.ends_with('/') && !path[1..].split('/').any(str::is_empty))
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && !name.contains(['/', ',', '(', ')']) && !name.contains(char::is_whitespace)
}

impl FromStr for NfsOp {
    type Err = ParseOpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let args = |prefix: &str| {
            s.strip_prefix(prefix).and_then(|rest| rest.strip_prefix('(')).and_then(|rest| rest.strip_suffix(')'))
        };
        if let Some(inner) = args("mkdir") {
            let (path, name) = inner.split_once(',').ok_or_else(|| ParseOpError::new(s, "mkdir takes (path,name)"))?;
            let (path, name) = (path.trim(), name.trim());
            if !valid_path(path) {
                return Err(ParseOpError::new(s, "path must be absolute"));
            }
            if !valid_name(name) {
                return Err(ParseOpError::new(s, "invalid directory name"));
            }
            Ok(NfsOp::mkdir(path, name))
        } else if let Some(inner) = args("rmdir") {
            let path = inner.trim();
            if !valid_path(path) {
                return Err(ParseOpError::new(s, "path must be absolute"));
            }
            Ok(NfsOp::rmdir(path))
        } else {
            Err(ParseOpError::new(s, "expected mkdir(..) or rmdir(..)"))
        }
    }
}

impl DataType for Nfs {
    type State = NfsState;
    type Op = NfsOp;

    const NAME: &'static str = "nfs";

    fn initial_state(&self) -> NfsState {
        NfsState::root()
    }

    fn apply(&self, state: &NfsState, op: &NfsOp) -> (NfsState, Response) {
        match op {
            NfsOp::Mkdir { path, name } => {
                if !valid_name(name) || !state.contains(path) {
                    return (state.clone(), Response::Bottom);
                }
                let target = join(path, name);
                // An existing target is treated as disabled.
                if state.contains(&target) {
                    return (state.clone(), Response::Bottom);
                }
                let mut next = state.clone();
                next.dirs.insert(target);
                (next, Response::Ok)
            }
            NfsOp::Rmdir { path } => {
                if path == "/" || !state.contains(path) || state.has_children(path) {
                    return (state.clone(), Response::Bottom);
                }
                let mut next = state.clone();
                next.dirs.remove(path);
                (next, Response::Ok)
            }
        }
    }

    fn random_op<R: Rng + ?Sized>(&self, state: &NfsState, rng: &mut R, fresh: u64) -> NfsOp {
        let leaves: Vec<&str> = state.paths().filter(|p| *p != "/" && !state.has_children(p)).collect();
        if !leaves.is_empty() && rng.gen_bool(0.35) {
            return NfsOp::rmdir(leaves[rng.gen_range(0..leaves.len())]);
        }
        let dirs: Vec<&str> = state.paths().collect();
        let parent = dirs[rng.gen_range(0..dirs.len())];
        NfsOp::mkdir(parent, format!("d{fresh}"))
    }
}

// ---------------------------------------------------------------------------
// Append-only integer log

/// Append-only log of integers. Every operation is enabled.
#[derive(Debug, Clone, Copy, Default)]
pub struct IntLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IntLogOp(pub i64);

impl Display for IntLogOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "append({})", self.0)
    }
}

impl FromStr for IntLogOp {
    type Err = ParseOpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        s.strip_prefix("append(")
            .and_then(|rest| rest.strip_suffix(')'))
            .and_then(|value| value.trim().parse().ok())
            .map(IntLogOp)
            .ok_or_else(|| ParseOpError::new(s, "expected append(<integer>)"))
    }
}

impl DataType for IntLog {
    type State = Vec<i64>;
    type Op = IntLogOp;

    const NAME: &'static str = "intlog";

    fn initial_state(&self) -> Vec<i64> {
        Vec::new()
    }

    fn apply(&self, state: &Vec<i64>, op: &IntLogOp) -> (Vec<i64>, Response) {
        let mut next = state.clone();
        next.push(op.0);
        (next, Response::Ok)
    }

    fn random_op<R: Rng + ?Sized>(&self, _state: &Vec<i64>, _rng: &mut R, fresh: u64) -> IntLogOp {
        IntLogOp(fresh as i64)
    }
}
