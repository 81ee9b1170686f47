//! The flat constraint network of a Bayesian network and relational
//! arc-consistency over a join-graph, used to certify the zero beliefs of
//! IJGP.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::decomposition::EdgeLabeledJoinGraph;
use crate::eval::{brute_force_marginals, exact_marginals, EvalError};
use crate::factor::{table_size, Factor, VarId};
use crate::inference::{belief_cluster, ConvergenceSpec, IjgpEngine, InferenceError};
use crate::model::{BayesianNetwork, Evidence};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlatError {
    #[error("variable {var} used with cardinalities {left} and {right}")]
    CardinalityMismatch { var: VarId, left: usize, right: usize },
    #[error("malformed relation: {0}")]
    Malformed(String),
}

/// A set of allowed tuples over an ordered scope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    scope: Vec<VarId>,
    cards: Vec<usize>,
    tuples: BTreeSet<Vec<usize>>,
}

impl Relation {
    pub fn new(scope: Vec<VarId>, cards: Vec<usize>, tuples: BTreeSet<Vec<usize>>) -> Result<Self, FlatError> {
        if scope.len() != cards.len() {
            return Err(FlatError::Malformed("scope and cardinalities differ in length".into()));
        }
        for t in &tuples {
            if t.len() != scope.len() || t.iter().zip(&cards).any(|(x, c)| x >= c) {
                return Err(FlatError::Malformed(format!("tuple {t:?} does not fit the scope")));
            }
        }
        Ok(Relation { scope, cards, tuples })
    }

    /// Every tuple over the scope.
    pub fn complete(scope: Vec<VarId>, cards: Vec<usize>) -> Self {
        let tuples = all_tuples(&cards).collect();
        Relation { scope, cards, tuples }
    }

    /// Tuples whose factor entry is strictly positive.
    pub fn support(f: &Factor) -> Self {
        let tuples = (0..f.len()).filter(|&k| f.values()[k] > 0.0).map(|k| f.assignment_of(k)).collect();
        Relation { scope: f.scope().to_vec(), cards: f.cards().to_vec(), tuples }
    }

    pub fn scope(&self) -> &[VarId] {
        &self.scope
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn tuples(&self) -> &BTreeSet<Vec<usize>> {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn contains(&self, tuple: &[usize]) -> bool {
        self.tuples.contains(tuple)
    }

    /// Membership of a full assignment, read through this relation's scope.
    pub fn allows(&self, full: &[usize]) -> bool {
        let t: Vec<usize> = self.scope.iter().map(|&v| full[v]).collect();
        self.tuples.contains(&t)
    }

    /// Keep tuples with `var = value` and drop the column.
    pub fn select(&self, var: VarId, value: usize) -> Relation {
        let Some(p) = self.scope.iter().position(|&v| v == var) else {
            return self.clone();
        };
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(p);
        cards.remove(p);
        let tuples = self
            .tuples
            .iter()
            .filter(|t| t[p] == value)
            .map(|t| {
                let mut t = t.clone();
                t.remove(p);
                t
            })
            .collect();
        Relation { scope, cards, tuples }
    }
}

fn all_tuples(cards: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let n = table_size(cards) as usize;
    (0..n).map(move |mut k| {
        let mut t = vec![0; cards.len()];
        for p in (0..cards.len()).rev() {
            t[p] = k % cards[p];
            k /= cards[p];
        }
        t
    })
}

/// Natural join; the result scope is the ascending union of both scopes.
pub fn relation_join(r1: &Relation, r2: &Relation) -> Result<Relation, FlatError> {
    let mut pairs: Vec<(VarId, usize)> = r1.scope.iter().copied().zip(r1.cards.iter().copied()).collect();
    for (&v, &c) in r2.scope.iter().zip(&r2.cards) {
        match pairs.iter().find(|p| p.0 == v) {
            Some(&(_, c0)) if c0 != c => return Err(FlatError::CardinalityMismatch { var: v, left: c0, right: c }),
            Some(_) => {}
            None => pairs.push((v, c)),
        }
    }
    pairs.sort_unstable();
    let scope: Vec<VarId> = pairs.iter().map(|p| p.0).collect();
    let cards: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let shared: Vec<VarId> = r1.scope.iter().copied().filter(|v| r2.scope.contains(v)).collect();
    let key = |r: &Relation, t: &[usize]| -> Vec<usize> {
        shared.iter().map(|v| t[r.scope.iter().position(|w| w == v).expect("shared")]).collect()
    };
    let mut index: BTreeMap<Vec<usize>, Vec<&Vec<usize>>> = BTreeMap::new();
    for t in &r2.tuples {
        index.entry(key(r2, t)).or_default().push(t);
    }
    let pos1: Vec<Option<usize>> = scope.iter().map(|v| r1.scope.iter().position(|w| w == v)).collect();
    let pos2: Vec<Option<usize>> = scope.iter().map(|v| r2.scope.iter().position(|w| w == v)).collect();
    let mut tuples = BTreeSet::new();
    for t1 in &r1.tuples {
        if let Some(matches) = index.get(&key(r1, t1)) {
            for t2 in matches {
                let t: Vec<usize> = pos1
                    .iter()
                    .zip(&pos2)
                    .map(|(a, b)| match (a, b) {
                        (Some(a), _) => t1[*a],
                        (None, Some(b)) => t2[*b],
                        (None, None) => unreachable!("variable comes from one side"),
                    })
                    .collect();
                tuples.insert(t);
            }
        }
    }
    Ok(Relation { scope, cards, tuples })
}

/// Projection onto the variables of `onto` that the relation mentions,
/// kept in the relation's own scope order.
pub fn relation_project(r: &Relation, onto: &[VarId]) -> Relation {
    let keep: Vec<usize> = (0..r.scope.len()).filter(|&p| onto.contains(&r.scope[p])).collect();
    let tuples = r.tuples.iter().map(|t| keep.iter().map(|&p| t[p]).collect()).collect();
    Relation {
        scope: keep.iter().map(|&p| r.scope[p]).collect(),
        cards: keep.iter().map(|&p| r.cards[p]).collect(),
        tuples,
    }
}

fn join_all(rels: &[&Relation]) -> Relation {
    let mut acc = Relation { scope: Vec::new(), cards: Vec::new(), tuples: BTreeSet::from([Vec::new()]) };
    for r in rels {
        acc = relation_join(&acc, r).expect("cardinalities agree within one network");
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintNetwork {
    pub cards: Vec<usize>,
    pub domains: Vec<BTreeSet<usize>>,
    /// One relation per CPT, in CPT order.
    pub constraints: Vec<Relation>,
}

impl ConstraintNetwork {
    /// Restrict to the observed values; observed variables leave every scope
    /// and keep a singleton domain.
    pub fn condition(&self, evidence: &Evidence) -> ConstraintNetwork {
        let mut out = self.clone();
        for (var, value) in evidence.iter() {
            out.domains[var] = BTreeSet::from([value]);
            for r in &mut out.constraints {
                *r = r.select(var, value);
            }
        }
        out
    }

    pub fn is_solution(&self, full: &[usize]) -> bool {
        full.iter().enumerate().all(|(v, x)| self.domains[v].contains(x))
            && self.constraints.iter().all(|r| r.allows(full))
    }
}

/// One relation per family holding the tuples with positive probability.
pub fn flatten(net: &BayesianNetwork) -> ConstraintNetwork {
    ConstraintNetwork {
        cards: net.cards(),
        domains: net.cards().iter().map(|&c| (0..c).collect()).collect(),
        constraints: net.cpts().iter().map(Relation::support).collect(),
    }
}

/// Relational arc-consistency state: pre-joined cluster relations, one
/// relation per directed edge (absent means unconstrained) and domains.
#[derive(Debug, Clone)]
pub struct RdacState<'g> {
    jg: &'g EdgeLabeledJoinGraph,
    cards: Vec<usize>,
    pub cluster_relations: Vec<Relation>,
    pub messages: BTreeMap<(usize, usize), Relation>,
    pub domains: Vec<BTreeSet<usize>>,
    pub iterations: usize,
    neighbors: Vec<Vec<usize>>,
    homes: Vec<Option<usize>>,
    fixed: Vec<Option<usize>>,
}

impl<'g> RdacState<'g> {
    /// `homes[x]` names the cluster whose relations decide the domain of `x`.
    pub fn new(cn: &ConstraintNetwork, jg: &'g EdgeLabeledJoinGraph, homes: Vec<Option<usize>>) -> Self {
        let cluster_relations = jg
            .nodes
            .iter()
            .map(|n| {
                let rels: Vec<&Relation> =
                    n.psi.iter().map(|&f| &cn.constraints[f]).filter(|r| !r.scope.is_empty()).collect();
                join_all(&rels)
            })
            .collect();
        let fixed = cn.domains.iter().map(|d| if d.len() == 1 { d.first().copied() } else { None }).collect();
        let mut st = RdacState {
            jg,
            cards: cn.cards.clone(),
            cluster_relations,
            messages: BTreeMap::new(),
            domains: cn.domains.clone(),
            iterations: 0,
            neighbors: (0..jg.num_nodes()).map(|u| jg.neighbors(u)).collect(),
            homes,
            fixed,
        };
        st.domains = st.current_domains();
        st
    }

    fn joined(&self, u: usize, skip: Option<usize>) -> Relation {
        let mut rels: Vec<&Relation> = vec![&self.cluster_relations[u]];
        for &w in &self.neighbors[u] {
            if Some(w) != skip {
                if let Some(m) = self.messages.get(&(w, u)) {
                    rels.push(m);
                }
            }
        }
        join_all(&rels)
    }

    /// Recompute the message `u -> v`; returns whether it changed. An absent
    /// message counts as the complete relation over the edge label.
    pub fn send(&mut self, u: usize, v: usize) -> bool {
        let label: Vec<VarId> = self.jg.label(u, v).expect("edge exists").iter().copied().collect();
        let h = relation_project(&self.joined(u, Some(v)), &label);
        let changed = self.allowed(self.messages.get(&(u, v)), &label) != self.allowed(Some(&h), &label);
        self.messages.insert((u, v), h);
        changed
    }

    /// Number of label tuples a message admits. Messages only shrink, so
    /// equal counts mean equal constraints.
    fn allowed(&self, r: Option<&Relation>, label: &[VarId]) -> u128 {
        let free = |scope: &[VarId]| {
            table_size(&label.iter().filter(|v| !scope.contains(v)).map(|&v| self.cards[v]).collect::<Vec<_>>())
        };
        match r {
            None => free(&[]),
            Some(r) => r.len() as u128 * free(&r.scope),
        }
    }

    /// Values each variable keeps at its home cluster.
    pub fn current_domains(&self) -> Vec<BTreeSet<usize>> {
        (0..self.cards.len())
            .map(|x| {
                if let Some(v) = self.fixed[x] {
                    return BTreeSet::from([v]);
                }
                let Some(u) = self.homes[x] else { return (0..self.cards[x]).collect() };
                let r = self.joined(u, None);
                match r.scope.iter().position(|&y| y == x) {
                    Some(p) => r.tuples.iter().map(|t| t[p]).collect(),
                    None if r.tuples.is_empty() => BTreeSet::new(),
                    None => (0..self.cards[x]).collect(),
                }
            })
            .collect()
    }

    /// Largest separator relation, `max ∏ d` over edge labels.
    pub fn max_separator_size(&self) -> usize {
        self.jg
            .edges
            .iter()
            .map(|e| table_size(&e.label.iter().map(|&v| self.cards[v]).collect::<Vec<_>>()) as usize)
            .max()
            .unwrap_or(1)
    }
}

/// `h` holds no tuple whose projection onto `prev`'s scope is missing from
/// `prev`.
fn shrinks(h: &Relation, prev: &Relation) -> bool {
    let pos: Vec<Option<usize>> = prev.scope.iter().map(|v| h.scope.iter().position(|w| w == v)).collect();
    if pos.iter().any(Option::is_none) {
        return false;
    }
    h.tuples.iter().all(|t| {
        let proj: Vec<usize> = pos.iter().map(|p| t[p.expect("checked")]).collect();
        prev.tuples.contains(&proj)
    })
}

/// Run sweeps of `schedule` until no message changes. The returned count
/// includes the final sweep that changed nothing.
pub fn rdac<'g>(
    cn: &ConstraintNetwork,
    jg: &'g EdgeLabeledJoinGraph,
    homes: Vec<Option<usize>>,
    schedule: &[(usize, usize)],
) -> RdacState<'g> {
    let mut st = RdacState::new(cn, jg, homes);
    loop {
        let before = st.messages.clone();
        let mut changed = false;
        for &(u, v) in schedule {
            changed |= st.send(u, v);
        }
        for (k, h) in &st.messages {
            if let Some(prev) = before.get(k) {
                assert!(shrinks(h, prev), "message {k:?} gained tuples");
            }
        }
        st.iterations += 1;
        let domains = st.current_domains();
        assert!(domains.iter().zip(&st.domains).all(|(a, b)| a.is_subset(b)), "a domain grew");
        st.domains = domains;
        if !changed {
            return st;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditCheck {
    pub name: &'static str,
    pub passed: bool,
    pub counterexample: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
    /// Sweeps until the arc-consistency fixpoint, final idle sweep included.
    pub rdac_iterations: usize,
    /// `max(m * r, 1)`: edges times the largest separator relation.
    pub rdac_bound: usize,
    pub ijgp_iterations: usize,
    /// (variable, value) pairs with zero belief at the end.
    pub zeros: Vec<(VarId, usize)>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            write!(f, "{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name)?;
            if let Some(x) = &c.counterexample {
                write!(f, " counterexample: {x}")?;
            }
            writeln!(f)?;
        }
        writeln!(f, "rdac_iterations {} bound {}", self.rdac_iterations, self.rdac_bound)?;
        writeln!(f, "ijgp_iterations {}", self.ijgp_iterations)?;
        let mut zeros = String::new();
        for (v, x) in &self.zeros {
            let _ = write!(zeros, " {v}={x}");
        }
        writeln!(f, "zero_beliefs {}{}", self.zeros.len(), zeros)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("zero-belief soundness violated:\n{0}")]
    SoundnessViolation(Box<AuditReport>),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Networks at most this large are checked against full enumeration;
/// larger ones against exact cluster-tree elimination.
pub const ENUMERATION_VARIABLES: usize = 12;

struct Failure {
    name: &'static str,
    first: Option<String>,
}

impl Failure {
    fn new(name: &'static str) -> Self {
        Failure { name, first: None }
    }

    fn fail(&mut self, what: String) {
        self.first.get_or_insert(what);
    }

    fn check(self) -> AuditCheck {
        AuditCheck { name: self.name, passed: self.first.is_none(), counterexample: self.first }
    }
}

fn zero_set(marginals: &[Vec<f64>], evidence: &Evidence) -> BTreeSet<(VarId, usize)> {
    let mut out = BTreeSet::new();
    for (v, row) in marginals.iter().enumerate() {
        if evidence.contains(v) {
            continue;
        }
        for (x, &p) in row.iter().enumerate() {
            if p == 0.0 {
                out.insert((v, x));
            }
        }
    }
    out
}

/// Run IJGP and relational arc-consistency side by side on `jg` with the
/// same message order and check that their zeros coincide, that IJGP zeros
/// are true zeros, and that zeros persist once arc-consistency settles.
pub fn zero_belief_audit(
    net: &BayesianNetwork,
    jg: &EdgeLabeledJoinGraph,
    evidence: &Evidence,
    spec: ConvergenceSpec,
) -> Result<AuditReport, AuditError> {
    let mut engine = IjgpEngine::new(net, jg.clone(), evidence, spec)?;
    let sweep = engine.sweep().to_vec();
    let homes: Vec<Option<usize>> = (0..net.num_variables()).map(|x| belief_cluster(net, jg, x)).collect();
    let cn = flatten(net).condition(evidence);
    let mut flat = RdacState::new(&cn, jg, homes);

    let mut messages = Failure::new("message zeros match arc-consistency");
    let mut values = Failure::new("belief zeros match removed values");
    let mut exactness = Failure::new("belief zeros are exact zeros");
    let mut stability = Failure::new("zeros persist after the fixpoint");

    let bound = (jg.edges.len() * flat.max_separator_size()).max(1);
    let mut fixpoint: Option<usize> = None;
    let mut history: Vec<BTreeSet<(VarId, usize)>> = Vec::new();
    let hard_cap = spec.max_iterations.max(1) + bound + 2;
    while history.len() < hard_cap {
        let it = history.len() + 1;
        let mut changed = false;
        for &(u, v) in &sweep {
            engine.send(u, v)?;
            changed |= flat.send(u, v);
            let h = &engine.messages()[&(u, v)];
            let r = &flat.messages[&(u, v)];
            if h.scope() != r.scope() {
                messages.fail(format!("iteration {it} message ({u},{v}) scopes {:?} vs {:?}", h.scope(), r.scope()));
                continue;
            }
            for k in 0..h.len() {
                let t = h.assignment_of(k);
                let zero = h.values()[k] == 0.0;
                if zero == r.contains(&t) {
                    messages.fail(format!(
                        "iteration {it} message ({u},{v}) tuple {t:?}: ijgp {} arc-consistency {}",
                        h.values()[k],
                        if r.contains(&t) { "keeps" } else { "drops" }
                    ));
                }
            }
        }
        flat.iterations = it;
        let domains = flat.current_domains();
        flat.domains = domains;
        let marginals = engine.beliefs()?.marginals;
        let zeros = zero_set(&marginals, evidence);
        for x in 0..net.num_variables() {
            if evidence.contains(x) {
                continue;
            }
            for val in 0..net.cardinality(x) {
                if zeros.contains(&(x, val)) == flat.domains[x].contains(&val) {
                    values.fail(format!("iteration {it} variable {x} value {val}: belief {}", marginals[x][val]));
                }
            }
        }
        if let Some(prev) = history.last() {
            if let Some(&(v, x)) = prev.difference(&zeros).next() {
                stability.fail(format!("iteration {it}: zero belief {v}={x} became positive"));
            }
        }
        history.push(zeros);
        if !changed && fixpoint.is_none() {
            fixpoint = Some(it);
        }
        if let Some(f) = fixpoint {
            if it >= spec.max_iterations.max(f + 1) {
                break;
            }
        }
    }
    let rdac_iterations = fixpoint.unwrap_or(history.len());
    if let Some(settled) = history.get(rdac_iterations.saturating_sub(1)) {
        for (k, later) in history.iter().enumerate().skip(rdac_iterations) {
            if later != settled {
                stability.fail(format!("iteration {}: zero set differs from the fixpoint", k + 1));
            }
        }
    }
    let final_zeros = history.last().cloned().unwrap_or_default();

    let exact = if net.num_variables() <= ENUMERATION_VARIABLES {
        brute_force_marginals(net, evidence)?
    } else {
        exact_marginals(net, evidence)?
    };
    for &(v, x) in &final_zeros {
        if exact.marginals[v][x] != 0.0 {
            exactness.fail(format!("variable {v} value {x}: exact posterior {}", exact.marginals[v][x]));
        }
    }
    let report = AuditReport {
        checks: vec![messages.check(), values.check(), exactness.check(), stability.check()],
        rdac_iterations,
        rdac_bound: bound,
        ijgp_iterations: history.len(),
        zeros: final_zeros.into_iter().collect(),
    };
    if report.passed() {
        Ok(report)
    } else {
        Err(AuditError::SoundnessViolation(Box::new(report)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(scope: &[usize], tuples: &[&[usize]]) -> Relation {
        Relation::new(scope.to_vec(), vec![2; scope.len()], tuples.iter().map(|t| t.to_vec()).collect()).unwrap()
    }

    #[test]
    fn projection_drops_columns() {
        let r = rel(&[0, 1], &[&[0, 0], &[0, 1]]);
        assert_eq!(relation_project(&r, &[0]), rel(&[0], &[&[0]]));
    }

    #[test]
    fn join_with_complete_relation_is_identity() {
        let r = rel(&[0, 1], &[&[0, 1], &[1, 0]]);
        let all = Relation::complete(vec![1], vec![2]);
        assert_eq!(relation_join(&r, &all).unwrap(), r);
    }

    #[test]
    fn join_mismatched_cardinality() {
        let a = Relation::complete(vec![0], vec![2]);
        let b = Relation::complete(vec![0], vec![3]);
        assert!(matches!(relation_join(&a, &b), Err(FlatError::CardinalityMismatch { var: 0, .. })));
    }

    #[test]
    fn support_drops_zero_entries() {
        let f = Factor::cpt(vec![0, 1], vec![2, 2], vec![0.5, 0.5, 1.0, 0.0], 1).unwrap();
        let r = Relation::support(&f);
        assert!(!r.contains(&[1, 1]));
        assert_eq!(r.len(), 3);
    }

    #[test]
    fn equality_constraint_prunes_domain() {
        use crate::decomposition::{ClusterNode, EdgeKind, JoinEdge};
        // A = B with D_B = {1}, as two clusters sharing A and B.
        let eq = rel(&[0, 1], &[&[0, 0], &[1, 1]]);
        let db = rel(&[1], &[&[1]]);
        let cn = ConstraintNetwork {
            cards: vec![2, 2],
            domains: vec![[0, 1].into(), [0, 1].into()],
            constraints: vec![eq, db],
        };
        let jg = EdgeLabeledJoinGraph {
            nodes: vec![
                ClusterNode { id: 0, chi: [0, 1].into(), psi: [0].into() },
                ClusterNode { id: 1, chi: [1].into(), psi: [1].into() },
            ],
            edges: vec![JoinEdge { u: 0, v: 1, label: [1].into(), kind: EdgeKind::Out }],
        };
        let st = rdac(&cn, &jg, vec![Some(0), Some(1)], &[(0, 1), (1, 0)]);
        assert_eq!(st.domains[0], BTreeSet::from([1]));
        assert_eq!(st.domains[1], BTreeSet::from([1]));
        assert_eq!(st.iterations, 2);
    }
}
