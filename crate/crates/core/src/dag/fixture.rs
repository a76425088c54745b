//! Line-oriented textual DAG format used by test fixtures.
//!
//! ```text
//! # issuer seq op : parents
//! 1 1 mkdir(/,d1) : root
//! 1 2 rmdir(/d2)  : 1.1 2.1
//! ```
//!
//! Lines are inserted in order, so parents must appear before children.
//! `#` starts a comment.

use std::collections::BTreeSet;
use std::fmt::{Display, Write as _};
use std::str::FromStr;

use thiserror::Error;

use super::{Command, CommandDag, CommandId, DagError, ReplicaId, Vertex};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FixtureError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Dag { line: usize, source: DagError },
}

fn syntax(line: usize, message: impl Into<String>) -> FixtureError {
    FixtureError::Syntax { line, message: message.into() }
}

fn parse_vertex(token: &str, line: usize) -> Result<Vertex, FixtureError> {
    if token == "root" || token == "ε" {
        return Ok(Vertex::Root);
    }
    let (issuer, seq) = token
        .split_once('.')
        .ok_or_else(|| syntax(line, format!("bad parent `{token}`, expected issuer.seq or root")))?;
    match (issuer.parse(), seq.parse()) {
        (Ok(i), Ok(s)) => Ok(Vertex::Command(CommandId::new(i, s))),
        _ => Err(syntax(line, format!("bad parent `{token}`"))),
    }
}

impl<O> CommandDag<O>
where
    O: FromStr,
    O::Err: Display,
{
    pub fn parse_fixture(text: &str) -> Result<Self, FixtureError> {
        let mut dag = CommandDag::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (head, tail) =
                content.split_once(':').ok_or_else(|| syntax(line, "missing `:` before the parent list"))?;
            let mut fields = head.split_whitespace();
            let (Some(issuer), Some(seq), Some(op), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(syntax(line, "expected `issuer seq op`"));
            };
            let issuer: u32 = issuer.parse().map_err(|_| syntax(line, "bad issuer"))?;
            let seq: u64 = seq.parse().map_err(|_| syntax(line, "bad sequence number"))?;
            let op: O = op.parse().map_err(|e| syntax(line, format!("{e}")))?;
            let parents = tail.split_whitespace().map(|t| parse_vertex(t, line)).collect::<Result<BTreeSet<_>, _>>()?;
            dag.insert(Command::new(op, ReplicaId(issuer), seq), parents)
                .map_err(|source| FixtureError::Dag { line, source })?;
        }
        Ok(dag)
    }
}

impl<O: Display> CommandDag<O> {
    /// Renders the DAG in fixture format, in insertion order.
    pub fn to_fixture(&self) -> String {
        let mut out = String::new();
        for c in self.commands() {
            let parents: Vec<String> = self.parents(c.id()).into_iter().flatten().map(|p| p.to_string()).collect();
            let _ = writeln!(out, "{} {} {} : {}", c.issuer, c.seq, c.op, parents.join(" "));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datatype::NfsOp;

    const FIG: &str = include_str!("../../fixtures/nfs_example.dag");

    #[test]
    fn parses_shipped_fixture() {
        let dag = CommandDag::<NfsOp>::parse_fixture(FIG).unwrap();
        assert_eq!(dag.len(), 7);
        assert_eq!(dag.command(CommandId::new(3, 2)).unwrap().op, NfsOp::mkdir("/d2/d4", "d5"));
        let again = CommandDag::<NfsOp>::parse_fixture(&dag.to_fixture()).unwrap();
        assert_eq!(again, dag);
    }

    #[test]
    fn reports_line_numbers() {
        let err = CommandDag::<NfsOp>::parse_fixture("1 1 mkdir(/,a) : root\n\n2 1 rmdir(/a) : 7.7\n").unwrap_err();
        assert!(matches!(err, FixtureError::Dag { line: 3, source: DagError::MissingParent { .. } }));
        let err = CommandDag::<NfsOp>::parse_fixture("1 1 mkdir(/,a) root").unwrap_err();
        assert!(matches!(err, FixtureError::Syntax { line: 1, .. }));
        let err = CommandDag::<NfsOp>::parse_fixture("1 1 chmod(/) : root").unwrap_err();
        assert!(matches!(err, FixtureError::Syntax { line: 1, .. }));
    }
}
