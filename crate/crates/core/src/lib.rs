//! Exact and bounded belief updating over discrete Bayesian networks.
//!
//! The crate covers cluster-tree elimination (CTE-BU), mini-cluster
//! elimination (MC-BU(i)), iterative join-graph propagation (IJGP(i)) and
//! iterative belief propagation (IBP), the relational arc-consistency
//! machinery that certifies their zero beliefs, benchmark generators and
//! accuracy metrics.

pub mod benchgen;
pub mod cli;
pub mod decomposition;
pub mod eval;
pub mod factor;
pub mod flat;
pub mod inference;
pub mod io;
pub mod model;

pub use factor::{combine, eliminate, normalize, EliminationOperator, Factor, FactorError, VarId};
pub use model::{build_network, BayesianNetwork, Evidence, ModelError, Variable};
