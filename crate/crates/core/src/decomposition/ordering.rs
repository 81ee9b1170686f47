//! Greedy elimination orderings.

use std::collections::BTreeSet;

use crate::model::UndirectedGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrderingHeuristic {
    /// Fewest fill edges added by the elimination.
    #[default]
    MinFill,
    /// Fewest remaining neighbors.
    MinInducedWidth,
}

fn fill_in(adj: &[BTreeSet<usize>], v: usize) -> usize {
    let ns: Vec<usize> = adj[v].iter().copied().collect();
    let mut missing = 0;
    for (i, &a) in ns.iter().enumerate() {
        for &b in &ns[i + 1..] {
            if !adj[a].contains(&b) {
                missing += 1;
            }
        }
    }
    missing
}

fn eliminate_node(adj: &mut [BTreeSet<usize>], v: usize) -> usize {
    let ns: Vec<usize> = adj[v].iter().copied().collect();
    for (i, &a) in ns.iter().enumerate() {
        for &b in &ns[i + 1..] {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }
    for &a in &ns {
        adj[a].remove(&v);
    }
    adj[v].clear();
    ns.len()
}

/// Elimination sequence (first eliminated first) and its induced width.
/// Ties go to the lowest node id.
pub fn elimination_order(graph: &UndirectedGraph, heuristic: OrderingHeuristic) -> (Vec<usize>, usize) {
    let n = graph.num_nodes();
    let mut adj: Vec<BTreeSet<usize>> = (0..n).map(|v| graph.neighbors(v).clone()).collect();
    let mut alive: BTreeSet<usize> = (0..n).collect();
    let mut order = Vec::with_capacity(n);
    let mut width = 0;
    while !alive.is_empty() {
        let pick = *alive
            .iter()
            .min_by_key(|&&v| match heuristic {
                OrderingHeuristic::MinFill => (fill_in(&adj, v), v),
                OrderingHeuristic::MinInducedWidth => (adj[v].len(), v),
            })
            .expect("nonempty");
        width = width.max(eliminate_node(&mut adj, pick));
        alive.remove(&pick);
        order.push(pick);
    }
    (order, width)
}

/// Induced width of `graph` along an elimination sequence.
pub fn induced_width(graph: &UndirectedGraph, order: &[usize]) -> usize {
    let mut adj: Vec<BTreeSet<usize>> = (0..graph.num_nodes()).map(|v| graph.neighbors(v).clone()).collect();
    order.iter().map(|&v| eliminate_node(&mut adj, v)).max().unwrap_or(0)
}
