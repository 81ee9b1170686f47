//! Discrete Bayesian networks, their graphs, and evidence conditioning.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::factor::{Factor, FactorError, VarId};

/// Absolute tolerance for a CPT column to count as normalized.
pub const CPT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("variables must be numbered 0..n without gaps and have positive cardinality ({0})")]
    BadVariables(String),
    #[error("the parent graph contains a cycle through variable {0}")]
    CyclicDag(VarId),
    #[error("CPT of variable {var} sums to {sum} for parent configuration {parents:?}")]
    UnnormalizedCpt { var: VarId, parents: Vec<usize>, sum: f64 },
    #[error("scope mismatch: {0}")]
    ScopeMismatch(String),
    #[error("evidence value {value} out of range for variable {var} (cardinality {card})")]
    ValueOutOfRange { var: VarId, value: usize, card: usize },
    #[error(transparent)]
    Factor(#[from] FactorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variable {
    pub id: VarId,
    pub cardinality: usize,
}

impl Variable {
    pub fn new(id: VarId, cardinality: usize) -> Self {
        Variable { id, cardinality }
    }
}

/// A validated Bayesian network. A network built with
/// [`BayesianNetwork::from_factors`] is a plain factor list (for example a
/// Markov network) and skips every CPT check.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesianNetwork {
    variables: Vec<Variable>,
    cpts: Vec<Factor>,
    dag_edges: Vec<(VarId, VarId)>,
    cpt_of: Vec<Option<usize>>,
    permissive: bool,
}

fn check_variables(variables: &[Variable]) -> Result<(), ModelError> {
    for (i, v) in variables.iter().enumerate() {
        if v.id != i {
            return Err(ModelError::BadVariables(format!("position {i} holds id {}", v.id)));
        }
        if v.cardinality == 0 {
            return Err(ModelError::BadVariables(format!("variable {i} has cardinality 0")));
        }
    }
    Ok(())
}

fn check_factor_cards(variables: &[Variable], f: &Factor) -> Result<(), ModelError> {
    for (&v, &c) in f.scope().iter().zip(f.cards()) {
        let Some(var) = variables.get(v) else {
            return Err(ModelError::ScopeMismatch(format!("unknown variable {v}")));
        };
        if var.cardinality != c {
            return Err(ModelError::ScopeMismatch(format!(
                "variable {v} has cardinality {} but a factor uses {c}",
                var.cardinality
            )));
        }
    }
    Ok(())
}

/// Validate and assemble a network from its CPTs and parent-to-child edges.
pub fn build_network(
    variables: Vec<Variable>,
    cpts: Vec<Factor>,
    dag_edges: Vec<(VarId, VarId)>,
) -> Result<BayesianNetwork, ModelError> {
    BayesianNetwork::new(variables, cpts, dag_edges)
}

impl BayesianNetwork {
    pub fn new(
        variables: Vec<Variable>,
        cpts: Vec<Factor>,
        dag_edges: Vec<(VarId, VarId)>,
    ) -> Result<Self, ModelError> {
        check_variables(&variables)?;
        let n = variables.len();
        let mut parents: Vec<BTreeSet<VarId>> = vec![BTreeSet::new(); n];
        for &(p, c) in &dag_edges {
            if p >= n || c >= n || p == c {
                return Err(ModelError::ScopeMismatch(format!("bad edge {p} -> {c}")));
            }
            parents[c].insert(p);
        }
        // Kahn's algorithm; anything left over sits on a cycle.
        let mut indeg: Vec<usize> = parents.iter().map(|s| s.len()).collect();
        let mut children: Vec<Vec<VarId>> = vec![Vec::new(); n];
        for (c, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        let mut queue: VecDeque<VarId> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop_front() {
            seen += 1;
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if seen < n {
            let culprit = (0..n).find(|&v| indeg[v] > 0).unwrap_or(0);
            return Err(ModelError::CyclicDag(culprit));
        }

        let mut cpt_of = vec![None; n];
        for (i, f) in cpts.iter().enumerate() {
            check_factor_cards(&variables, f)?;
            let child = f
                .child()
                .ok_or_else(|| ModelError::ScopeMismatch(format!("factor {i} is not a CPT")))?;
            if child >= n {
                return Err(ModelError::ScopeMismatch(format!("factor {i} names child {child}")));
            }
            if cpt_of[child].replace(i).is_some() {
                return Err(ModelError::ScopeMismatch(format!("variable {child} has two CPTs")));
            }
            let scope: BTreeSet<VarId> = f.scope().iter().copied().collect();
            let mut family = parents[child].clone();
            family.insert(child);
            if scope != family {
                return Err(ModelError::ScopeMismatch(format!(
                    "CPT of {child} has scope {:?} but its family is {:?}",
                    scope, family
                )));
            }
            check_normalized(f, child)?;
        }
        if let Some(v) = cpt_of.iter().position(Option::is_none) {
            return Err(ModelError::ScopeMismatch(format!("variable {v} has no CPT")));
        }
        let mut dag_edges = dag_edges;
        dag_edges.sort_unstable();
        dag_edges.dedup();
        Ok(BayesianNetwork { variables, cpts, dag_edges, cpt_of, permissive: false })
    }

    /// A factor list over `variables` without CPT semantics.
    pub fn from_factors(variables: Vec<Variable>, factors: Vec<Factor>) -> Result<Self, ModelError> {
        check_variables(&variables)?;
        for f in &factors {
            check_factor_cards(&variables, f)?;
        }
        let n = variables.len();
        let mut cpt_of = vec![None; n];
        for (i, f) in factors.iter().enumerate() {
            if let Some(c) = f.child() {
                if cpt_of[c].is_none() {
                    cpt_of[c] = Some(i);
                }
            }
        }
        Ok(BayesianNetwork { variables, cpts: factors, dag_edges: Vec::new(), cpt_of, permissive: true })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn cardinality(&self, v: VarId) -> usize {
        self.variables[v].cardinality
    }

    pub fn cards(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.cardinality).collect()
    }

    /// All factors, in the order they were supplied.
    pub fn cpts(&self) -> &[Factor] {
        &self.cpts
    }

    pub fn dag_edges(&self) -> &[(VarId, VarId)] {
        &self.dag_edges
    }

    pub fn is_permissive(&self) -> bool {
        self.permissive
    }

    /// Index into [`cpts`](Self::cpts) of the CPT whose child is `v`.
    pub fn cpt_index(&self, v: VarId) -> Option<usize> {
        self.cpt_of[v]
    }

    pub fn parents(&self, v: VarId) -> Vec<VarId> {
        self.dag_edges.iter().filter(|e| e.1 == v).map(|e| e.0).collect()
    }

    /// Topological order, smallest ready id first.
    pub fn topological_order(&self) -> Vec<VarId> {
        let n = self.num_variables();
        let mut indeg = vec![0usize; n];
        for &(_, c) in &self.dag_edges {
            indeg[c] += 1;
        }
        let mut ready: BTreeSet<VarId> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &(p, c) in &self.dag_edges {
                if p == v {
                    indeg[c] -= 1;
                    if indeg[c] == 0 {
                        ready.insert(c);
                    }
                }
            }
        }
        order
    }

    /// Product of all factor entries under a complete assignment.
    pub fn joint(&self, assignment: &[usize]) -> f64 {
        self.cpts.iter().map(|f| f.eval(assignment)).product()
    }

    pub fn max_scope_size(&self) -> usize {
        self.cpts.iter().map(|f| f.scope().len()).max().unwrap_or(0)
    }

    /// Factors conditioned on `evidence`.
    pub fn reduced_factors(&self, evidence: &Evidence) -> Result<Vec<Factor>, ModelError> {
        evidence.validate(self)?;
        apply_evidence(&self.cpts, evidence)
    }
}

fn check_normalized(f: &Factor, child: VarId) -> Result<(), ModelError> {
    let pos = f.scope().iter().position(|&v| v == child).expect("child in scope");
    let others: Vec<usize> = (0..f.scope().len()).filter(|&p| p != pos).collect();
    let parent_configs: usize = others.iter().map(|&p| f.cards()[p]).product();
    let mut assignment = vec![0usize; f.scope().len()];
    for cfg in 0..parent_configs {
        let mut rest = cfg;
        let mut parents = vec![0; others.len()];
        for (k, &p) in others.iter().enumerate().rev() {
            parents[k] = rest % f.cards()[p];
            assignment[p] = parents[k];
            rest /= f.cards()[p];
        }
        let mut sum = 0.0;
        for x in 0..f.cards()[pos] {
            assignment[pos] = x;
            sum += f.value_at(&assignment);
        }
        if (sum - 1.0).abs() > CPT_TOLERANCE {
            return Err(ModelError::UnnormalizedCpt { var: child, parents, sum });
        }
    }
    Ok(())
}

/// Observed values for a subset of the variables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Evidence {
    assignments: BTreeMap<VarId, usize>,
}

impl Evidence {
    pub fn empty() -> Self {
        Evidence::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (VarId, usize)>>(pairs: I) -> Self {
        Evidence { assignments: pairs.into_iter().collect() }
    }

    pub fn validate(&self, net: &BayesianNetwork) -> Result<(), ModelError> {
        for (&var, &value) in &self.assignments {
            if var >= net.num_variables() {
                return Err(ModelError::ValueOutOfRange { var, value, card: 0 });
            }
            let card = net.cardinality(var);
            if value >= card {
                return Err(ModelError::ValueOutOfRange { var, value, card });
            }
        }
        Ok(())
    }

    pub fn get(&self, var: VarId) -> Option<usize> {
        self.assignments.get(&var).copied()
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.assignments.contains_key(&var)
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, usize)> + '_ {
        self.assignments.iter().map(|(&k, &v)| (k, v))
    }

    pub fn insert(&mut self, var: VarId, value: usize) {
        self.assignments.insert(var, value);
    }
}

/// Slice every factor at the observed values. Evidence variables leave the
/// scopes; factors that become empty stay as scalar constants.
pub fn apply_evidence(factors: &[Factor], evidence: &Evidence) -> Result<Vec<Factor>, ModelError> {
    factors
        .iter()
        .map(|f| {
            let mut g = f.clone();
            for (var, value) in evidence.iter() {
                if let Some(card) = g.card_of(var) {
                    if value >= card {
                        return Err(ModelError::ValueOutOfRange { var, value, card });
                    }
                    g = g.restrict(var, value);
                }
            }
            Ok(g)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    adj: Vec<BTreeSet<usize>>,
}

impl UndirectedGraph {
    pub fn new(n: usize) -> Self {
        UndirectedGraph { adj: vec![BTreeSet::new(); n] }
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a != b {
            self.adj[a].insert(b);
            self.adj[b].insert(a);
        }
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].contains(&b)
    }

    pub fn neighbors(&self, v: usize) -> &BTreeSet<usize> {
        &self.adj[v]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, ns) in self.adj.iter().enumerate() {
            for &b in ns {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn add_clique(&mut self, nodes: &[usize]) {
        for (i, &a) in nodes.iter().enumerate() {
            for &b in &nodes[i + 1..] {
                self.add_edge(a, b);
            }
        }
    }
}

/// Primal graph of the network: every factor scope becomes a clique.
pub fn moral_graph(net: &BayesianNetwork) -> UndirectedGraph {
    let mut g = UndirectedGraph::new(net.num_variables());
    for f in net.cpts() {
        g.add_clique(f.scope());
    }
    g
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledEdge {
    pub u: usize,
    pub v: usize,
    pub label: Vec<VarId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledGraph {
    pub num_nodes: usize,
    pub edges: Vec<LabeledEdge>,
}

/// One node per factor; nodes whose scopes intersect are joined by an edge
/// labeled with the shared variables.
pub fn dual_graph(factors: &[Factor]) -> LabeledGraph {
    let mut edges = Vec::new();
    for i in 0..factors.len() {
        for j in i + 1..factors.len() {
            let mut label: Vec<VarId> =
                factors[i].scope().iter().copied().filter(|v| factors[j].contains(*v)).collect();
            if !label.is_empty() {
                label.sort_unstable();
                edges.push(LabeledEdge { u: i, v: j, label });
            }
        }
    }
    LabeledGraph { num_nodes: factors.len(), edges }
}
