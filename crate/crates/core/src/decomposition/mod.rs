//! Tree decompositions, edge-labeled join-graphs and their validation.

mod jointree;
mod ordering;
mod structuring;

use std::collections::{BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::factor::{Factor, VarId};
use crate::model::UndirectedGraph;

pub use jointree::build_join_tree;
pub use ordering::{elimination_order, induced_width, OrderingHeuristic};
pub use structuring::{
    join_graph_structuring, join_graph_structuring_relaxed, join_graph_structuring_with_order, schematic_mini_bucket,
    singleton_dual_join_graph, BucketForest, MiniBucket,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecompositionError {
    #[error("a function over {size} variables does not fit the bound i = {bound}")]
    IBoundTooSmall { size: usize, bound: usize },
    #[error("clusters containing variable {0} are not connected through labels containing it")]
    NotConnected(VarId),
    #[error("elimination order is not a permutation of the variables")]
    InvalidOrder,
    #[error("the network has no CPT structure")]
    NotBayesian,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterNode {
    pub id: usize,
    pub chi: BTreeSet<VarId>,
    /// Ids of the factors placed here.
    pub psi: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeDecomposition {
    pub nodes: Vec<ClusterNode>,
    pub edges: Vec<(usize, usize)>,
}

impl TreeDecomposition {
    pub fn sep(&self, u: usize, v: usize) -> BTreeSet<VarId> {
        self.nodes[u].chi.intersection(&self.nodes[v].chi).copied().collect()
    }

    pub fn elim(&self, u: usize, v: usize) -> BTreeSet<VarId> {
        self.nodes[u].chi.difference(&self.nodes[v].chi).copied().collect()
    }

    pub fn treewidth(&self) -> usize {
        self.nodes.iter().map(|n| n.chi.len()).max().unwrap_or(1).saturating_sub(1)
    }

    pub fn neighbors(&self, u: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| if a == u { Some(b) } else if b == u { Some(a) } else { None })
            .collect();
        out.sort_unstable();
        out
    }

    /// The same decomposition as a join-graph labeled by separators.
    pub fn to_join_graph(&self) -> EdgeLabeledJoinGraph {
        let edges = self
            .edges
            .iter()
            .map(|&(u, v)| JoinEdge { u, v, label: self.sep(u, v), kind: EdgeKind::Out })
            .collect();
        EdgeLabeledJoinGraph { nodes: self.nodes.clone(), edges }
    }

    pub fn to_text(&self) -> String {
        self.to_join_graph().to_text()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    /// Edge along which a (mini-)bucket message travels.
    Out,
    /// Chain edge between mini-buckets of one bucket.
    In,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinEdge {
    pub u: usize,
    pub v: usize,
    pub label: BTreeSet<VarId>,
    pub kind: EdgeKind,
}

impl JoinEdge {
    pub fn other(&self, x: usize) -> usize {
        if self.u == x {
            self.v
        } else {
            self.u
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeLabeledJoinGraph {
    pub nodes: Vec<ClusterNode>,
    pub edges: Vec<JoinEdge>,
}

impl EdgeLabeledJoinGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_between(&self, u: usize, v: usize) -> Option<&JoinEdge> {
        self.edges.iter().find(|e| (e.u == u && e.v == v) || (e.u == v && e.v == u))
    }

    pub fn label(&self, u: usize, v: usize) -> Option<&BTreeSet<VarId>> {
        self.edge_between(u, v).map(|e| &e.label)
    }

    /// Neighbor ids of `u`, ascending.
    pub fn neighbors(&self, u: usize) -> Vec<usize> {
        let mut out: Vec<usize> =
            self.edges.iter().filter(|e| e.u == u || e.v == u).map(|e| e.other(u)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Largest cluster.
    pub fn internal_width(&self) -> usize {
        self.nodes.iter().map(|n| n.chi.len()).max().unwrap_or(0)
    }

    /// Min-fill upper bound on the treewidth of the cluster graph.
    pub fn external_width(&self) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let mut g = UndirectedGraph::new(self.nodes.len());
        for e in &self.edges {
            g.add_edge(e.u, e.v);
        }
        elimination_order(&g, OrderingHeuristic::MinFill).1
    }

    pub fn is_tree(&self) -> bool {
        is_tree(self.nodes.len(), self.edges.iter().map(|e| (e.u, e.v)))
    }

    /// One line per cluster: `id | chi | psi | neighbor:label ...`.
    pub fn to_text(&self) -> String {
        let join = |s: &BTreeSet<usize>| s.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        for n in &self.nodes {
            let nb: Vec<String> = self
                .neighbors(n.id)
                .into_iter()
                .map(|m| {
                    let l = self.label(n.id, m).expect("neighbor edge");
                    let l: Vec<String> = l.iter().map(|x| x.to_string()).collect();
                    format!("{m}:{}", l.join(","))
                })
                .collect();
            let _ = writeln!(out, "{} | {} | {} | {}", n.id, join(&n.chi), join(&n.psi), nb.join(" "));
        }
        out
    }
}

impl fmt::Display for EdgeLabeledJoinGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Join-graph with one cluster per CPT and singleton edge labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualJoinGraph {
    pub graph: EdgeLabeledJoinGraph,
}

fn is_tree(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> bool {
    let edges: Vec<(usize, usize)> = edges.collect();
    if n == 0 {
        return edges.is_empty();
    }
    if edges.len() != n - 1 {
        return false;
    }
    let mut uf = UnionFind::new(n);
    edges.iter().all(|&(a, b)| uf.union(a, b))
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Whether the clusters containing `var` are connected by edges whose label
/// contains `var`, ignoring edge `skip`.
fn var_connected(jg: &EdgeLabeledJoinGraph, var: VarId, skip: Option<usize>) -> bool {
    let holders: Vec<usize> = jg.nodes.iter().filter(|n| n.chi.contains(&var)).map(|n| n.id).collect();
    if holders.len() <= 1 {
        return true;
    }
    let mut uf = UnionFind::new(jg.nodes.len());
    for (k, e) in jg.edges.iter().enumerate() {
        if Some(k) != skip && e.label.contains(&var) {
            uf.union(e.u, e.v);
        }
    }
    let root = uf.find(holders[0]);
    holders.iter().all(|&h| uf.find(h) == root)
}

fn all_vars(jg: &EdgeLabeledJoinGraph) -> BTreeSet<VarId> {
    jg.nodes.iter().flat_map(|n| n.chi.iter().copied()).collect()
}

/// Greedily drop variables from edge labels while every variable stays
/// edge-connected. Edges are scanned in order and variables ascending,
/// repeating until nothing changes; edges left with an empty label vanish.
pub fn minimize_edge_labels(jg: &EdgeLabeledJoinGraph) -> Result<EdgeLabeledJoinGraph, DecompositionError> {
    let vars = all_vars(jg);
    if let Some(&v) = vars.iter().find(|&&v| !var_connected(jg, v, None)) {
        return Err(DecompositionError::NotConnected(v));
    }
    let mut out = jg.clone();
    loop {
        let mut changed = false;
        for k in 0..out.edges.len() {
            let label: Vec<VarId> = out.edges[k].label.iter().copied().collect();
            for v in label {
                if var_connected(&out, v, Some(k)) {
                    out.edges[k].label.remove(&v);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    out.edges.retain(|e| !e.label.is_empty());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Factor placed in `count` clusters instead of one.
    FactorPlacement { factor: usize, count: usize },
    ScopeContainment { cluster: usize, factor: usize },
    /// Edge label not contained in both endpoint clusters.
    LabelNotShared { u: usize, v: usize },
    /// Running intersection (trees) or edge-connectedness (join-graphs).
    Disconnected { var: VarId },
    NotATree,
    LabelNotMinimal { u: usize, v: usize, var: VarId },
    VariableCycle { var: VarId },
    WidthExceeded { cluster: usize, size: usize, bound: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Max cluster size minus one, for tree decompositions.
    pub treewidth: Option<usize>,
    pub internal_width: usize,
    pub external_width: usize,
    pub label_minimal: bool,
    pub per_variable_acyclic: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum DecompositionRef<'a> {
    Tree(&'a TreeDecomposition),
    JoinGraph(&'a EdgeLabeledJoinGraph),
}

impl<'a> From<&'a TreeDecomposition> for DecompositionRef<'a> {
    fn from(t: &'a TreeDecomposition) -> Self {
        DecompositionRef::Tree(t)
    }
}

impl<'a> From<&'a EdgeLabeledJoinGraph> for DecompositionRef<'a> {
    fn from(g: &'a EdgeLabeledJoinGraph) -> Self {
        DecompositionRef::JoinGraph(g)
    }
}

impl<'a> From<&'a DualJoinGraph> for DecompositionRef<'a> {
    fn from(g: &'a DualJoinGraph) -> Self {
        DecompositionRef::JoinGraph(&g.graph)
    }
}

/// Check a decomposition of `factors`; every problem found becomes an entry
/// of the report.
pub fn validate_decomposition<'a>(d: impl Into<DecompositionRef<'a>>, factors: &[Factor]) -> ValidationReport {
    validate_with(d.into(), factors, None)
}

/// [`validate_decomposition`] plus a cap on cluster size.
pub fn validate_with_bound<'a>(
    d: impl Into<DecompositionRef<'a>>,
    factors: &[Factor],
    i: usize,
) -> ValidationReport {
    validate_with(d.into(), factors, Some(i))
}

fn validate_with(
    d: DecompositionRef<'_>,
    factors: &[Factor],
    bound: Option<usize>,
) -> ValidationReport {
    let (jg, tree) = match d {
        DecompositionRef::Tree(t) => (t.to_join_graph(), true),
        DecompositionRef::JoinGraph(g) => (g.clone(), false),
    };
    let mut report = ValidationReport::default();
    let mut placed = vec![0usize; factors.len()];
    for n in &jg.nodes {
        for &f in &n.psi {
            match factors.get(f) {
                Some(fac) => {
                    placed[f] += 1;
                    if !fac.scope().iter().all(|v| n.chi.contains(v)) {
                        report.violations.push(Violation::ScopeContainment { cluster: n.id, factor: f });
                    }
                }
                None => report.violations.push(Violation::FactorPlacement { factor: f, count: 0 }),
            }
        }
        if let Some(i) = bound {
            if n.chi.len() > i {
                report.violations.push(Violation::WidthExceeded { cluster: n.id, size: n.chi.len(), bound: i });
            }
        }
    }
    for (f, &c) in placed.iter().enumerate() {
        if c != 1 {
            report.violations.push(Violation::FactorPlacement { factor: f, count: c });
        }
    }
    for e in &jg.edges {
        if !e.label.iter().all(|v| jg.nodes[e.u].chi.contains(v) && jg.nodes[e.v].chi.contains(v)) {
            report.violations.push(Violation::LabelNotShared { u: e.u, v: e.v });
        }
    }
    let vars = all_vars(&jg);
    for &v in &vars {
        if !var_connected(&jg, v, None) {
            report.violations.push(Violation::Disconnected { var: v });
        }
    }
    if tree && !jg.is_tree() {
        report.violations.push(Violation::NotATree);
    }

    report.label_minimal = true;
    for (k, e) in jg.edges.iter().enumerate() {
        for &v in &e.label {
            if var_connected(&jg, v, None) && var_connected(&jg, v, Some(k)) {
                report.label_minimal = false;
                report.violations.push(Violation::LabelNotMinimal { u: e.u, v: e.v, var: v });
            }
        }
    }
    report.per_variable_acyclic = true;
    for &v in &vars {
        let holders = jg.nodes.iter().filter(|n| n.chi.contains(&v)).count();
        let carriers = jg.edges.iter().filter(|e| e.label.contains(&v)).count();
        if carriers + 1 > holders {
            report.per_variable_acyclic = false;
            report.violations.push(Violation::VariableCycle { var: v });
        }
    }
    report.internal_width = jg.internal_width();
    report.external_width = jg.external_width();
    if tree {
        report.treewidth = Some(report.internal_width.saturating_sub(1));
    }
    report
}

/// True when every path from `nw` to `ny` uses an edge listed in `ez`
/// (edge positions in `jg.edges`).
pub fn edge_separation(
    jg: &EdgeLabeledJoinGraph,
    nw: &BTreeSet<usize>,
    ny: &BTreeSet<usize>,
    ez: &BTreeSet<usize>,
) -> bool {
    let mut seen = vec![false; jg.nodes.len()];
    let mut queue: VecDeque<usize> = nw.iter().copied().collect();
    for &s in nw {
        seen[s] = true;
    }
    while let Some(u) = queue.pop_front() {
        if ny.contains(&u) {
            return false;
        }
        for (k, e) in jg.edges.iter().enumerate() {
            if ez.contains(&k) || (e.u != u && e.v != u) {
                continue;
            }
            let w = e.other(u);
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: usize, chi: &[usize], psi: &[usize]) -> ClusterNode {
        ClusterNode { id, chi: chi.iter().copied().collect(), psi: psi.iter().copied().collect() }
    }

    fn edge(u: usize, v: usize, label: &[usize]) -> JoinEdge {
        JoinEdge { u, v, label: label.iter().copied().collect(), kind: EdgeKind::Out }
    }

    fn cyclic_on_four() -> EdgeLabeledJoinGraph {
        EdgeLabeledJoinGraph {
            nodes: vec![node(0, &[1, 2, 4], &[]), node(1, &[2, 3, 4], &[]), node(2, &[1, 3, 4], &[])],
            edges: vec![edge(0, 1, &[2, 4]), edge(1, 2, &[3, 4]), edge(0, 2, &[1, 4])],
        }
    }

    #[test]
    fn minimizing_breaks_the_cycle_on_four() {
        let m = minimize_edge_labels(&cyclic_on_four()).unwrap();
        let labels: Vec<Vec<usize>> = m.edges.iter().map(|e| e.label.iter().copied().collect()).collect();
        assert_eq!(labels, vec![vec![2], vec![3, 4], vec![1, 4]]);
        let report = validate_decomposition(&m, &[]);
        assert!(report.is_valid(), "{:?}", report.violations);
        assert!(report.label_minimal && report.per_variable_acyclic);
    }

    #[test]
    fn minimal_graph_is_a_fixpoint() {
        let m = minimize_edge_labels(&cyclic_on_four()).unwrap();
        assert_eq!(minimize_edge_labels(&m).unwrap(), m);
    }

    #[test]
    fn cycle_is_reported_as_non_minimal() {
        let r = validate_decomposition(&cyclic_on_four(), &[]);
        assert!(!r.label_minimal);
        assert!(!r.per_variable_acyclic);
        assert!(r.violations.contains(&Violation::VariableCycle { var: 4 }));
    }

    #[test]
    fn disconnected_input_is_rejected() {
        let jg = EdgeLabeledJoinGraph {
            nodes: vec![node(0, &[0, 1], &[]), node(1, &[1], &[])],
            edges: vec![],
        };
        assert_eq!(minimize_edge_labels(&jg), Err(DecompositionError::NotConnected(1)));
    }

    #[test]
    fn missing_scope_variable_is_a_containment_violation() {
        let f = Factor::constant(vec![0, 1], vec![2, 2], 1.0).unwrap();
        let t = TreeDecomposition { nodes: vec![node(0, &[0], &[0]), node(1, &[1], &[])], edges: vec![(0, 1)] };
        let r = validate_decomposition(&t, &[f]);
        assert_eq!(r.violations, vec![Violation::ScopeContainment { cluster: 0, factor: 0 }]);
    }

    #[test]
    fn separation_extremes() {
        let jg = cyclic_on_four();
        let nw: BTreeSet<usize> = [0].into();
        let ny: BTreeSet<usize> = [1].into();
        assert!(edge_separation(&jg, &nw, &ny, &(0..3).collect()));
        assert!(!edge_separation(&jg, &nw, &ny, &BTreeSet::new()));
        assert!(!edge_separation(&jg, &nw, &ny, &[0].into()));
        assert!(edge_separation(&jg, &nw, &ny, &[0, 1].into()));
    }

    #[test]
    fn text_format() {
        let t = TreeDecomposition { nodes: vec![node(0, &[0, 1], &[0]), node(1, &[1, 2], &[1])], edges: vec![(0, 1)] };
        assert_eq!(t.to_text(), "0 | 0 1 | 0 | 1:1\n1 | 1 2 | 1 | 0:1\n");
    }
}
