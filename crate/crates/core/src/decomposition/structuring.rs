//! Bounded join-graphs from schematic mini-buckets, and the singleton-labeled
//! dual join-graph used by IBP.

use std::collections::BTreeSet;

use crate::factor::VarId;
use crate::inference::partition_scopes_relaxed;
use crate::model::{moral_graph, BayesianNetwork};

use super::{
    elimination_order, ClusterNode, DecompositionError, DualJoinGraph, EdgeKind, EdgeLabeledJoinGraph, JoinEdge,
    OrderingHeuristic,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniBucket {
    pub id: usize,
    pub bucket_var: VarId,
    pub scope: BTreeSet<VarId>,
    /// Original factors resident in this mini-bucket.
    pub factors: BTreeSet<usize>,
    /// Scope of the message this mini-bucket emits (empty for roots).
    pub message: BTreeSet<VarId>,
    /// Mini-bucket that receives the message.
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketForest {
    /// Elimination sequence, first eliminated first.
    pub order: Vec<VarId>,
    pub mini_buckets: Vec<MiniBucket>,
    /// Mini-bucket ids of each variable's bucket, in creation order.
    pub buckets: Vec<Vec<usize>>,
}

enum Item {
    Factor(usize),
    Message(usize),
}

/// Trace the scopes mini-bucket elimination would create along `order`
/// without computing any table.
pub fn schematic_mini_bucket(
    net: &BayesianNetwork,
    order: &[VarId],
    i: usize,
) -> Result<BucketForest, DecompositionError> {
    schematic(net, order, i, false)
}

fn schematic(net: &BayesianNetwork, order: &[VarId], i: usize, oversize: bool) -> Result<BucketForest, DecompositionError> {
    let n = net.num_variables();
    let mut pos = vec![usize::MAX; n];
    for (p, &v) in order.iter().enumerate() {
        if v >= n || pos[v] != usize::MAX {
            return Err(DecompositionError::InvalidOrder);
        }
        pos[v] = p;
    }
    if order.len() != n {
        return Err(DecompositionError::InvalidOrder);
    }
    if let Some(f) = net.cpts().iter().find(|f| f.scope().len() > i && !oversize) {
        return Err(DecompositionError::IBoundTooSmall { size: f.scope().len(), bound: i });
    }

    let mut items: Vec<Vec<(Item, Vec<VarId>)>> = (0..n).map(|_| Vec::new()).collect();
    for (fid, f) in net.cpts().iter().enumerate() {
        let home = match f.scope().iter().min_by_key(|&&v| pos[v]) {
            Some(&v) => v,
            None => match order.last() {
                Some(&v) => v,
                None => continue,
            },
        };
        items[home].push((Item::Factor(fid), f.scope().to_vec()));
    }

    let mut mini_buckets: Vec<MiniBucket> = Vec::new();
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &x in order {
        let resident = std::mem::take(&mut items[x]);
        let scopes: Vec<&[VarId]> = resident.iter().map(|(_, s)| s.as_slice()).collect();
        let groups = if resident.is_empty() {
            Vec::new()
        } else {
            partition_scopes_relaxed(&scopes, i)
        };
        let groups: Vec<(BTreeSet<VarId>, Vec<usize>)> = if groups.is_empty() {
            vec![(BTreeSet::from([x]), Vec::new())]
        } else {
            groups.into_iter().map(|g| (g.scope, g.members)).collect()
        };
        for (mut scope, members) in groups {
            scope.insert(x);
            let id = mini_buckets.len();
            let mut factors = BTreeSet::new();
            for &m in &members {
                match resident[m].0 {
                    Item::Factor(f) => {
                        factors.insert(f);
                    }
                    Item::Message(src) => mini_buckets[src].parent = Some(id),
                }
            }
            let message: BTreeSet<VarId> = scope.iter().copied().filter(|&v| v != x).collect();
            if let Some(&target) = message.iter().min_by_key(|&&v| pos[v]) {
                items[target].push((Item::Message(id), message.iter().copied().collect()));
            }
            buckets[x].push(id);
            mini_buckets.push(MiniBucket { id, bucket_var: x, scope, factors, message, parent: None });
        }
    }
    Ok(BucketForest { order: order.to_vec(), mini_buckets, buckets })
}

/// Join-graph whose clusters are the mini-buckets of
/// [`schematic_mini_bucket`] along a min-fill order.
pub fn join_graph_structuring(net: &BayesianNetwork, i: usize) -> Result<EdgeLabeledJoinGraph, DecompositionError> {
    let (order, _) = elimination_order(&moral_graph(net), OrderingHeuristic::MinFill);
    join_graph_structuring_with_order(net, &order, i)
}

/// [`join_graph_structuring`] for i-bounds below the largest CPT: a function
/// wider than `i` gets a mini-bucket of its own, so those clusters exceed
/// the bound.
pub fn join_graph_structuring_relaxed(net: &BayesianNetwork, i: usize) -> Result<EdgeLabeledJoinGraph, DecompositionError> {
    let (order, _) = elimination_order(&moral_graph(net), OrderingHeuristic::MinFill);
    Ok(forest_to_join_graph(&schematic(net, &order, i, true)?))
}

/// Mini-buckets become clusters, message edges keep their separator as
/// label and the mini-buckets of one bucket are chained by edges labeled
/// with the bucket variable.
pub fn join_graph_structuring_with_order(
    net: &BayesianNetwork,
    order: &[VarId],
    i: usize,
) -> Result<EdgeLabeledJoinGraph, DecompositionError> {
    Ok(forest_to_join_graph(&schematic_mini_bucket(net, order, i)?))
}

fn forest_to_join_graph(forest: &BucketForest) -> EdgeLabeledJoinGraph {
    let order = &forest.order;
    let nodes = forest
        .mini_buckets
        .iter()
        .map(|mb| ClusterNode { id: mb.id, chi: mb.scope.clone(), psi: mb.factors.clone() })
        .collect();
    let mut edges = Vec::new();
    for mb in &forest.mini_buckets {
        if let Some(p) = mb.parent {
            edges.push(JoinEdge { u: mb.id, v: p, label: mb.message.clone(), kind: EdgeKind::Out });
        }
    }
    for &x in order {
        for w in forest.buckets[x].windows(2) {
            edges.push(JoinEdge { u: w[0], v: w[1], label: BTreeSet::from([x]), kind: EdgeKind::In });
        }
    }
    EdgeLabeledJoinGraph { nodes, edges }
}

/// One cluster per CPT; along a topological order, the CPT of each variable
/// is linked to the CPT of each parent by an edge labeled with that parent.
pub fn singleton_dual_join_graph(net: &BayesianNetwork) -> Result<DualJoinGraph, DecompositionError> {
    if net.is_permissive() {
        return Err(DecompositionError::NotBayesian);
    }
    let nodes = net
        .cpts()
        .iter()
        .enumerate()
        .map(|(id, f)| ClusterNode { id, chi: f.scope().iter().copied().collect(), psi: BTreeSet::from([id]) })
        .collect();
    let mut edges = Vec::new();
    for x in net.topological_order() {
        let child = net.cpt_index(x).expect("one CPT per variable");
        for p in net.parents(x) {
            let parent = net.cpt_index(p).expect("one CPT per variable");
            edges.push(JoinEdge {
                u: child.min(parent),
                v: child.max(parent),
                label: BTreeSet::from([p]),
                kind: EdgeKind::Out,
            });
        }
    }
    Ok(DualJoinGraph { graph: EdgeLabeledJoinGraph { nodes, edges } })
}
