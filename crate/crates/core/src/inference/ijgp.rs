//! Iterative join-graph propagation. IBP is the special case of the
//! singleton-labeled dual join-graph.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::decomposition::{
    singleton_dual_join_graph, validate_decomposition, EdgeLabeledJoinGraph, Violation,
};
use crate::factor::{
    combine_with_support, eliminate, table_size, EliminationOperator, Factor, VarId, DEFAULT_TABLE_LIMIT,
};
use crate::model::{BayesianNetwork, Evidence};

use super::{belief_row, message_schedule, one_hot, BeliefKind, Beliefs, ConvergenceSpec, InferenceError};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub marginals: Vec<Vec<f64>>,
    /// Largest change of any normalized message entry in this iteration.
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct IjgpRun {
    pub beliefs: Beliefs,
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    pub converged: bool,
}

impl IjgpRun {
    /// One line per iteration and variable: `iter var d p_1 ... p_d`.
    pub fn trace_text(&self) -> String {
        let mut out = String::new();
        for t in &self.trace {
            for (v, row) in t.marginals.iter().enumerate() {
                let _ = write!(out, "{} {v} {}", t.iteration, row.len());
                for p in row {
                    let _ = write!(out, " {p:.16e}");
                }
                out.push('\n');
            }
        }
        out
    }
}

pub fn ijgp(
    net: &BayesianNetwork,
    jg: &EdgeLabeledJoinGraph,
    evidence: &Evidence,
    spec: ConvergenceSpec,
) -> Result<IjgpRun, InferenceError> {
    IjgpEngine::new(net, jg.clone(), evidence, spec)?.run()
}

/// Iterative belief propagation: IJGP over the singleton dual join-graph.
pub fn ibp(net: &BayesianNetwork, evidence: &Evidence, spec: ConvergenceSpec) -> Result<IjgpRun, InferenceError> {
    let dual = singleton_dual_join_graph(net)?;
    IjgpEngine::new(net, dual.graph, evidence, spec)?.run()
}

/// Cluster that reports the belief of `x`: the one holding its CPT, else the
/// lowest cluster mentioning it.
pub fn belief_cluster(net: &BayesianNetwork, jg: &EdgeLabeledJoinGraph, x: VarId) -> Option<usize> {
    net.cpt_index(x)
        .and_then(|f| jg.nodes.iter().position(|c| c.psi.contains(&f)))
        .or_else(|| jg.nodes.iter().position(|c| c.chi.contains(&x)))
}

/// Stepwise IJGP. Messages absent from the store count as the constant 1.
pub struct IjgpEngine<'a> {
    net: &'a BayesianNetwork,
    jg: EdgeLabeledJoinGraph,
    evidence: &'a Evidence,
    spec: ConvergenceSpec,
    reduced: Vec<Factor>,
    sweep: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    messages: BTreeMap<(usize, usize), Factor>,
    iteration: usize,
    cap: u128,
}

fn structural(v: &Violation) -> bool {
    !matches!(v, Violation::LabelNotMinimal { .. } | Violation::VariableCycle { .. })
}

fn normalized(f: &Factor) -> Vec<f64> {
    let s = f.sum();
    if s > 0.0 {
        f.values().iter().map(|x| x / s).collect()
    } else {
        f.values().to_vec()
    }
}

impl<'a> IjgpEngine<'a> {
    pub fn new(
        net: &'a BayesianNetwork,
        jg: EdgeLabeledJoinGraph,
        evidence: &'a Evidence,
        spec: ConvergenceSpec,
    ) -> Result<Self, InferenceError> {
        let report = validate_decomposition(&jg, net.cpts());
        let bad: Vec<Violation> = report.violations.into_iter().filter(structural).collect();
        if !bad.is_empty() {
            return Err(InferenceError::DecompositionInvalid(bad));
        }
        let reduced = net.reduced_factors(evidence)?;
        let forward = message_schedule(&jg);
        let mut sweep = forward.clone();
        sweep.extend(forward.iter().rev());
        let neighbors = (0..jg.num_nodes()).map(|u| jg.neighbors(u)).collect();
        let d = net.variables().iter().map(|v| v.cardinality).max().unwrap_or(1);
        let cap = table_size(&vec![d; jg.internal_width()]);
        Ok(IjgpEngine {
            net,
            jg,
            evidence,
            spec,
            reduced,
            sweep,
            neighbors,
            messages: BTreeMap::new(),
            iteration: 0,
            cap,
        })
    }

    pub fn join_graph(&self) -> &EdgeLabeledJoinGraph {
        &self.jg
    }

    /// Directed edges in the order one iteration updates them.
    pub fn sweep(&self) -> &[(usize, usize)] {
        &self.sweep
    }

    pub fn messages(&self) -> &BTreeMap<(usize, usize), Factor> {
        &self.messages
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn reduced_factors(&self) -> &[Factor] {
        &self.reduced
    }

    fn cluster_inputs(&self, u: usize, skip: Option<usize>) -> Vec<&Factor> {
        let mut out: Vec<&Factor> =
            self.jg.nodes[u].psi.iter().map(|&f| &self.reduced[f]).filter(|f| !f.is_scalar()).collect();
        for &w in &self.neighbors[u] {
            if Some(w) != skip {
                if let Some(m) = self.messages.get(&(w, u)) {
                    out.push(m);
                }
            }
        }
        out
    }

    /// Product of `inputs` with its support indicator when some entries
    /// underflowed.
    fn product(&self, inputs: &[&Factor]) -> Result<(Factor, Option<Factor>), InferenceError> {
        let (prod, support) = combine_with_support(inputs, DEFAULT_TABLE_LIMIT)?;
        assert!(prod.len() as u128 <= self.cap, "cluster table of {} entries exceeds d^i", prod.len());
        Ok((prod, support))
    }

    /// Sum out `elim`, refusing to turn a positive sum into an exact zero.
    fn sum_out(
        prod: &Factor,
        support: Option<&Factor>,
        elim: &[VarId],
        from: usize,
        to: usize,
    ) -> Result<Factor, InferenceError> {
        let h = eliminate(prod, elim, EliminationOperator::Sum)?;
        if let Some(s) = support {
            let s = eliminate(s, elim, EliminationOperator::Max)?;
            if h.values().iter().zip(s.values()).any(|(&a, &b)| a == 0.0 && b > 0.0) {
                return Err(InferenceError::UnderflowDetected { from, to });
            }
        }
        Ok(h)
    }

    fn compute(&self, u: usize, v: usize) -> Result<Factor, InferenceError> {
        let inputs = self.cluster_inputs(u, Some(v));
        let label = self.jg.label(u, v).expect("scheduled edge exists");
        let (prod, support) = self.product(&inputs)?;
        let elim: Vec<VarId> = prod.scope().iter().copied().filter(|x| !label.contains(x)).collect();
        let h = Self::sum_out(&prod, support.as_ref(), &elim, u, v)?;
        if !self.spec.rescale {
            return Ok(h);
        }
        let m = h.max_value();
        if m == 0.0 {
            return Ok(h);
        }
        let scaled = h.divided(m);
        if h.values().iter().zip(scaled.values()).any(|(&a, &b)| a > 0.0 && b == 0.0) {
            return Err(InferenceError::UnderflowDetected { from: u, to: v });
        }
        Ok(scaled)
    }

    /// Update one directed message in place.
    pub fn send(&mut self, u: usize, v: usize) -> Result<(), InferenceError> {
        let h = self.compute(u, v)?;
        self.messages.insert((u, v), h);
        Ok(())
    }

    /// One iteration (schedule forward, then backward). Returns the largest
    /// change of a normalized message entry, infinite when a message is new.
    pub fn iterate(&mut self) -> Result<f64, InferenceError> {
        let before: BTreeMap<(usize, usize), (Vec<VarId>, Vec<f64>)> =
            self.messages.iter().map(|(&k, f)| (k, (f.scope().to_vec(), normalized(f)))).collect();
        for k in 0..self.sweep.len() {
            let (u, v) = self.sweep[k];
            self.send(u, v)?;
        }
        self.iteration += 1;
        let mut delta: f64 = 0.0;
        for (k, f) in &self.messages {
            match before.get(k) {
                Some((scope, old)) if scope.as_slice() == f.scope() => {
                    for (a, b) in old.iter().zip(normalized(f)) {
                        delta = delta.max((a - b).abs());
                    }
                }
                _ => delta = f64::INFINITY,
            }
        }
        Ok(delta)
    }

    pub fn home_cluster(&self, x: VarId) -> Option<usize> {
        belief_cluster(self.net, &self.jg, x)
    }

    pub fn beliefs(&self) -> Result<Beliefs, InferenceError> {
        let mut cache: BTreeMap<usize, (Factor, Option<Factor>)> = BTreeMap::new();
        let mut marginals = Vec::with_capacity(self.net.num_variables());
        for x in 0..self.net.num_variables() {
            let card = self.net.cardinality(x);
            if let Some(value) = self.evidence.get(x) {
                marginals.push(one_hot(card, value));
                continue;
            }
            let Some(u) = self.home_cluster(x) else {
                marginals.push(vec![1.0 / card as f64; card]);
                continue;
            };
            if !cache.contains_key(&u) {
                let inputs = self.cluster_inputs(u, None);
                cache.insert(u, self.product(&inputs)?);
            }
            let (prod, support) = &cache[&u];
            let elim: Vec<VarId> = prod.scope().iter().copied().filter(|&y| y != x).collect();
            let row = belief_row(&Self::sum_out(prod, support.as_ref(), &elim, u, u)?, x, card);
            let sum: f64 = row.iter().sum();
            if !(sum > 0.0) {
                return Err(InferenceError::AllZero(format!("variable {x} at iteration {}", self.iteration)));
            }
            marginals.push(row.iter().map(|p| p / sum).collect());
        }
        Ok(Beliefs { kind: BeliefKind::Approximate, marginals, joint: None, normalizer: None })
    }

    pub fn run(mut self) -> Result<IjgpRun, InferenceError> {
        let mut trace = Vec::new();
        let mut converged = false;
        loop {
            let delta = self.iterate()?;
            let beliefs = self.beliefs()?;
            trace.push(TraceEntry { iteration: self.iteration, marginals: beliefs.marginals.clone(), delta });
            if delta < self.spec.tolerance {
                converged = true;
            }
            if converged || self.iteration >= self.spec.max_iterations {
                return Ok(IjgpRun { beliefs, trace, iterations: self.iteration, converged });
            }
        }
    }
}
