//! Join trees from triangulation along an elimination order.

use std::collections::BTreeSet;

use crate::model::{moral_graph, BayesianNetwork};

use super::{ClusterNode, DecompositionError, TreeDecomposition, UnionFind};

/// Triangulate the moral graph along `order` (first eliminated first), keep
/// the maximal cliques, connect them by a maximum-weight spanning tree on
/// separator sizes and place each factor in the first clique containing it.
pub fn build_join_tree(net: &BayesianNetwork, order: &[usize]) -> Result<TreeDecomposition, DecompositionError> {
    let n = net.num_variables();
    let mut check: Vec<usize> = order.to_vec();
    check.sort_unstable();
    if check != (0..n).collect::<Vec<_>>() {
        return Err(DecompositionError::InvalidOrder);
    }
    let g = moral_graph(net);
    let mut adj: Vec<BTreeSet<usize>> = (0..n).map(|v| g.neighbors(v).clone()).collect();
    let mut cliques: Vec<BTreeSet<usize>> = Vec::new();
    for &v in order {
        let mut clique = adj[v].clone();
        clique.insert(v);
        let ns: Vec<usize> = adj[v].iter().copied().collect();
        for (i, &a) in ns.iter().enumerate() {
            for &b in &ns[i + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
            adj[a].remove(&v);
        }
        adj[v].clear();
        if !cliques.iter().any(|c| clique.is_subset(c)) {
            cliques.retain(|c| !c.is_subset(&clique));
            cliques.push(clique);
        }
    }
    if cliques.is_empty() {
        cliques.push(BTreeSet::new());
    }

    let k = cliques.len();
    let mut candidates = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            candidates.push((cliques[a].intersection(&cliques[b]).count(), a, b));
        }
    }
    candidates.sort_by(|x, y| y.0.cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut uf = UnionFind::new(k);
    let mut edges = Vec::new();
    for (_, a, b) in candidates {
        if uf.union(a, b) {
            edges.push((a, b));
        }
    }

    let mut nodes: Vec<ClusterNode> = cliques
        .into_iter()
        .enumerate()
        .map(|(id, chi)| ClusterNode { id, chi, psi: BTreeSet::new() })
        .collect();
    for (fid, f) in net.cpts().iter().enumerate() {
        let home = nodes
            .iter()
            .position(|c| f.scope().iter().all(|v| c.chi.contains(v)))
            .expect("every family lies inside some clique");
        nodes[home].psi.insert(fid);
    }
    Ok(TreeDecomposition { nodes, edges })
}
