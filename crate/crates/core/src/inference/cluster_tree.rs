//! Two-pass message passing over a tree decomposition, exact (CTE-BU) or
//! with clusters split into bounded mini-clusters (MC-BU).

use std::collections::{BTreeSet, VecDeque};

use crate::decomposition::{validate_decomposition, TreeDecomposition};
use crate::factor::{combine, eliminate, table_size, EliminationOperator, Factor, VarId};
use crate::model::{BayesianNetwork, Evidence};

use super::{
    belief_row, one_hot, partition_scopes, partition_scopes_relaxed, BeliefKind, Beliefs, InferenceError, McMode, Message, MessageStore,
};

pub struct ClusterTreeEngine<'a> {
    net: &'a BayesianNetwork,
    tree: &'a TreeDecomposition,
    evidence: &'a Evidence,
    bound: Option<usize>,
    mode: McMode,
    root: usize,
    oversize: bool,
}

#[derive(Debug, Clone)]
pub struct ClusterTreeRun {
    pub beliefs: Beliefs,
    pub messages: MessageStore,
}

/// Exact marginals by cluster-tree elimination.
pub fn cte_bu(net: &BayesianNetwork, tree: &TreeDecomposition, evidence: &Evidence) -> Result<Beliefs, InferenceError> {
    Ok(ClusterTreeEngine::exact(net, tree, evidence).run()?.beliefs)
}

/// Mini-cluster elimination with clusters split into parts of at most `i`
/// variables.
pub fn mc_bu(
    net: &BayesianNetwork,
    tree: &TreeDecomposition,
    evidence: &Evidence,
    i: usize,
    mode: McMode,
) -> Result<Beliefs, InferenceError> {
    Ok(ClusterTreeEngine::mini_cluster(net, tree, evidence, i, mode).run()?.beliefs)
}

impl<'a> ClusterTreeEngine<'a> {
    pub fn exact(net: &'a BayesianNetwork, tree: &'a TreeDecomposition, evidence: &'a Evidence) -> Self {
        ClusterTreeEngine { net, tree, evidence, bound: None, mode: McMode::Sum, root: 0, oversize: false }
    }

    pub fn mini_cluster(
        net: &'a BayesianNetwork,
        tree: &'a TreeDecomposition,
        evidence: &'a Evidence,
        i: usize,
        mode: McMode,
    ) -> Self {
        ClusterTreeEngine { net, tree, evidence, bound: Some(i), mode, root: 0, oversize: false }
    }

    /// Cluster the inward pass converges on.
    pub fn with_root(mut self, root: usize) -> Self {
        self.root = root;
        self
    }

    /// Let functions wider than the bound through; each occupies a
    /// mini-cluster of its own.
    pub fn allow_oversize(mut self) -> Self {
        self.oversize = true;
        self
    }

    fn kind(&self) -> BeliefKind {
        match self.bound {
            None => BeliefKind::Exact,
            Some(_) => self.mode.kind(),
        }
    }

    fn other_op(&self) -> EliminationOperator {
        match self.mode {
            McMode::Upper => EliminationOperator::Max,
            McMode::Lower => EliminationOperator::Min,
            McMode::Approx => EliminationOperator::Mean,
            McMode::Sum => EliminationOperator::Sum,
        }
    }

    pub fn run(&self) -> Result<ClusterTreeRun, InferenceError> {
        let report = validate_decomposition(self.tree, self.net.cpts());
        if !report.is_valid() {
            return Err(InferenceError::DecompositionInvalid(report.violations));
        }
        let reduced = self.net.reduced_factors(self.evidence)?;
        if let (Some(i), false) = (self.bound, self.oversize) {
            if let Some((index, f)) = reduced.iter().enumerate().find(|(_, f)| f.scope().len() > i) {
                return Err(InferenceError::FunctionTooLarge { index, size: f.scope().len(), bound: i });
            }
        }
        let widest = reduced.iter().map(|f| f.scope().len()).max().unwrap_or(0);
        let cap = self.bound.map(|i| {
            let d = self.net.variables().iter().map(|v| v.cardinality).max().unwrap_or(1);
            table_size(&vec![d; i.max(widest)])
        });
        let ctx = Context { engine: self, reduced: &reduced, cap };

        let n = self.tree.nodes.len();
        let mut parent = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([self.root]);
        seen[self.root] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for w in self.tree.neighbors(u) {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = u;
                    queue.push_back(w);
                }
            }
        }

        let mut store = MessageStore { iteration: 1, ..Default::default() };
        for &u in order.iter().rev() {
            if u != self.root {
                let m = ctx.send(u, parent[u], &store)?;
                store.messages.insert((u, parent[u]), m);
            }
        }
        for &u in &order {
            for w in self.tree.neighbors(u) {
                if parent[w] == u {
                    let m = ctx.send(u, w, &store)?;
                    store.messages.insert((u, w), m);
                }
            }
        }
        let beliefs = ctx.beliefs(&store)?;
        Ok(ClusterTreeRun { beliefs, messages: store })
    }
}

struct Context<'e, 'a> {
    engine: &'e ClusterTreeEngine<'a>,
    reduced: &'e [Factor],
    cap: Option<u128>,
}

impl Context<'_, '_> {
    /// ψ(u) followed by the messages u received, skipping the one from `skip`.
    fn inputs<'s>(&'s self, u: usize, skip: Option<usize>, store: &'s MessageStore) -> Vec<&'s Factor> {
        let tree = self.engine.tree;
        let mut out: Vec<&Factor> = tree.nodes[u].psi.iter().map(|&f| &self.reduced[f]).collect();
        for w in tree.neighbors(u) {
            if Some(w) != skip {
                if let Some(m) = store.get(w, u) {
                    out.extend(m.functions());
                }
            }
        }
        out
    }

    /// Eliminate `elim` from the product of `inputs`. Functions that miss
    /// the eliminator pass through; the rest are processed per mini-cluster.
    fn process(&self, inputs: &[&Factor], elim: &BTreeSet<VarId>) -> Result<(Vec<Factor>, Vec<Factor>), InferenceError> {
        let (touching, individuals): (Vec<&Factor>, Vec<&Factor>) =
            inputs.iter().partition(|f| f.scope().iter().any(|v| elim.contains(v)));
        let groups: Vec<Vec<usize>> = match self.engine.bound {
            _ if touching.is_empty() => Vec::new(),
            None => vec![(0..touching.len()).collect()],
            Some(i) => {
                let scopes: Vec<&[VarId]> = touching.iter().map(|f| f.scope()).collect();
                let groups =
                    if self.engine.oversize { partition_scopes_relaxed(&scopes, i) } else { partition_scopes(&scopes, i)? };
                groups.into_iter().map(|g| g.members).collect()
            }
        };
        let mut combined = Vec::with_capacity(groups.len());
        for (k, g) in groups.iter().enumerate() {
            let members: Vec<&Factor> = g.iter().map(|&m| touching[m]).collect();
            let prod = combine(&members)?;
            if let Some(cap) = self.cap {
                assert!(prod.len() as u128 <= cap, "mini-cluster table of {} entries exceeds d^i", prod.len());
            }
            let vars: Vec<VarId> = prod.scope().iter().copied().filter(|v| elim.contains(v)).collect();
            let op = if k == 0 { EliminationOperator::Sum } else { self.engine.other_op() };
            let mut h = eliminate(&prod, &vars, op)?;
            if k == 0 && self.engine.bound.is_some() && self.engine.mode != McMode::Sum {
                // Unobserved eliminated variables outside the group count their domain size.
                let absent: f64 = elim
                    .iter()
                    .filter(|&&v| !prod.scope().contains(&v) && !self.engine.evidence.contains(v))
                    .map(|&v| self.engine.net.cardinality(v) as f64)
                    .product();
                if absent != 1.0 {
                    h = h.multiplied(absent);
                }
            }
            combined.push(h);
        }
        Ok((combined, individuals.into_iter().cloned().collect()))
    }

    fn send(&self, u: usize, v: usize, store: &MessageStore) -> Result<Message, InferenceError> {
        let inputs = self.inputs(u, Some(v), store);
        let elim = self.engine.tree.elim(u, v);
        let (combined, individuals) = self.process(&inputs, &elim)?;
        Ok(Message { from: u, to: v, combined, individuals })
    }

    /// Everything in cluster `u` eliminated except `keep`.
    fn belief_at(&self, u: usize, keep: Option<VarId>, store: &MessageStore) -> Result<Factor, InferenceError> {
        let inputs = self.inputs(u, None, store);
        let elim: BTreeSet<VarId> =
            self.engine.tree.nodes[u].chi.iter().copied().filter(|&v| Some(v) != keep).collect();
        let (combined, individuals) = self.process(&inputs, &elim)?;
        let parts: Vec<&Factor> = combined.iter().chain(&individuals).collect();
        Ok(combine(&parts)?)
    }

    fn beliefs(&self, store: &MessageStore) -> Result<Beliefs, InferenceError> {
        let net = self.engine.net;
        let tree = self.engine.tree;
        let kind = self.engine.kind();
        let normalizer = self.belief_at(self.engine.root, None, store)?.values()[0];
        let mut marginals = Vec::with_capacity(net.num_variables());
        let mut joint = Vec::with_capacity(net.num_variables());
        for x in 0..net.num_variables() {
            let card = net.cardinality(x);
            if let Some(value) = self.engine.evidence.get(x) {
                let row = one_hot(card, value);
                joint.push(row.iter().map(|p| p * normalizer).collect());
                marginals.push(row);
                continue;
            }
            let home = net
                .cpt_index(x)
                .and_then(|f| tree.nodes.iter().position(|c| c.psi.contains(&f)))
                .or_else(|| tree.nodes.iter().position(|c| c.chi.contains(&x)));
            let Some(home) = home else {
                marginals.push(vec![1.0 / card as f64; card]);
                joint.push(vec![normalizer / card as f64; card]);
                continue;
            };
            let row = belief_row(&self.belief_at(home, Some(x), store)?, x, card);
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                marginals.push(row.iter().map(|p| p / sum).collect());
            } else if kind == BeliefKind::LowerBound {
                marginals.push(vec![1.0 / card as f64; card]);
            } else {
                return Err(InferenceError::AllZero(format!("variable {x}")));
            }
            joint.push(row);
        }
        Ok(Beliefs { kind, marginals, joint: Some(joint), normalizer: Some(normalizer) })
    }
}
