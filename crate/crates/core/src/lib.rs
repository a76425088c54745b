//! DAG-based eventually consistent state-machine replication.
//!
//! Replicas append commands to a causally ordered DAG, disseminate them with
//! reliable broadcast, and derive their local history by applying a
//! reconciliation function to the DAG. The [`sim`] module drives replicas
//! through a deterministic asynchronous network and checks the resulting
//! traces for the consistency, stability and fairness guarantees.

pub mod broadcast;
pub mod dag;
pub mod datatype;
pub mod reconcile;
pub mod replica;
pub mod sim;
