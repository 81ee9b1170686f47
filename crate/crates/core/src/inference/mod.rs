//! Belief updating: exact cluster-tree elimination, bounded mini-clustering,
//! iterative join-graph propagation and iterative belief propagation.

mod cluster_tree;
mod ijgp;
pub(crate) mod partition;
mod schedule;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::decomposition::{DecompositionError, Violation};
use crate::factor::{Factor, FactorError, VarId};
use crate::model::ModelError;

pub use cluster_tree::{cte_bu, mc_bu, ClusterTreeEngine, ClusterTreeRun};
pub use ijgp::{belief_cluster, ibp, ijgp, IjgpEngine, IjgpRun, TraceEntry};
pub use partition::{partition_cluster, partition_scopes, partition_scopes_relaxed, MiniCluster};
pub use schedule::message_schedule;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("decomposition is invalid: {0:?}")]
    DecompositionInvalid(Vec<Violation>),
    #[error(transparent)]
    Decomposition(#[from] DecompositionError),
    #[error("function {index} has {size} variables, more than the bound i = {bound}")]
    FunctionTooLarge { index: usize, size: usize, bound: usize },
    #[error("table of {entries} entries exceeds the limit of {limit}")]
    ScopeTooLarge { entries: u128, limit: usize },
    #[error("all beliefs vanished ({0}); the evidence has probability zero under this approximation")]
    AllZero(String),
    #[error("a positive entry underflowed to zero in the message from cluster {from} to cluster {to}")]
    UnderflowDetected { from: usize, to: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Factor(FactorError),
}

impl From<FactorError> for InferenceError {
    fn from(e: FactorError) -> Self {
        match e {
            FactorError::ScopeTooLarge { entries, limit } => InferenceError::ScopeTooLarge { entries, limit },
            e => InferenceError::Factor(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeliefKind {
    Exact,
    Approximate,
    UpperBound,
    LowerBound,
}

/// Per-variable marginals. `joint`, when present, holds the unnormalized
/// values P(x_i, e) (or bounds on them) and `normalizer` the matching
/// estimate of P(e).
#[derive(Debug, Clone, PartialEq)]
pub struct Beliefs {
    pub kind: BeliefKind,
    pub marginals: Vec<Vec<f64>>,
    pub joint: Option<Vec<Vec<f64>>>,
    pub normalizer: Option<f64>,
}

impl Beliefs {
    /// Plain text, one line per variable: `var d p_1 ... p_d`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (v, row) in self.marginals.iter().enumerate() {
            let _ = write!(out, "{v} {}", row.len());
            for p in row {
                let _ = write!(out, " {p:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Operator used on every mini-cluster except the one kept under summation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McMode {
    /// Maximization: upper bounds on P(x_i, e).
    Upper,
    /// Minimization: lower bounds on P(x_i, e).
    Lower,
    /// Mean, an approximation.
    Approx,
    /// Summation everywhere: the plain product of mini-cluster sums.
    Sum,
}

impl McMode {
    pub fn kind(self) -> BeliefKind {
        match self {
            McMode::Upper => BeliefKind::UpperBound,
            McMode::Lower => BeliefKind::LowerBound,
            McMode::Approx | McMode::Sum => BeliefKind::Approximate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceSpec {
    pub max_iterations: usize,
    /// Stop once no normalized message entry moves by this much.
    pub tolerance: f64,
    /// Divide each message by its largest entry. Disabling this is only
    /// useful for exercising the underflow guard.
    pub rescale: bool,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        ConvergenceSpec { max_iterations: 30, tolerance: 1e-8, rescale: true }
    }
}

impl ConvergenceSpec {
    pub fn iterations(max_iterations: usize) -> Self {
        ConvergenceSpec { max_iterations, ..Default::default() }
    }
}

/// What travels along one directed edge: combined functions (one per
/// mini-cluster) and functions passed through untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub from: usize,
    pub to: usize,
    pub combined: Vec<Factor>,
    pub individuals: Vec<Factor>,
}

impl Message {
    pub fn functions(&self) -> impl Iterator<Item = &Factor> {
        self.combined.iter().chain(&self.individuals)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MessageStore {
    pub messages: BTreeMap<(usize, usize), Message>,
    pub iteration: usize,
}

impl MessageStore {
    pub fn get(&self, from: usize, to: usize) -> Option<&Message> {
        self.messages.get(&(from, to))
    }
}

/// One-hot row for an observed value.
pub(crate) fn one_hot(card: usize, value: usize) -> Vec<f64> {
    let mut row = vec![0.0; card];
    row[value] = 1.0;
    row
}

pub(crate) fn belief_row(f: &Factor, var: VarId, card: usize) -> Vec<f64> {
    if f.is_scalar() {
        return vec![f.values()[0]; card];
    }
    debug_assert_eq!(f.scope(), &[var]);
    f.values().to_vec()
}
