//! Message ordering for join-graph propagation.

use crate::decomposition::EdgeLabeledJoinGraph;

/// Every directed edge once, each time picking the edge whose source has the
/// fewest incoming messages still unscheduled (not counting the message from
/// the target). Ties go to the lowest `(u, v)` pair.
pub fn message_schedule(jg: &EdgeLabeledJoinGraph) -> Vec<(usize, usize)> {
    let mut directed: Vec<(usize, usize)> = jg.edges.iter().flat_map(|e| [(e.u, e.v), (e.v, e.u)]).collect();
    directed.sort_unstable();
    directed.dedup();
    let neighbors: Vec<Vec<usize>> = (0..jg.num_nodes()).map(|u| jg.neighbors(u)).collect();
    let mut missing: Vec<usize> = directed.iter().map(|&(u, _)| neighbors[u].len() - 1).collect();
    let mut done = vec![false; directed.len()];
    let mut out = Vec::with_capacity(directed.len());
    for _ in 0..directed.len() {
        // `directed` is sorted, so the first minimum is the lowest pair.
        let k = (0..directed.len())
            .filter(|&k| !done[k])
            .min_by_key(|&k| missing[k])
            .expect("edges remain");
        done[k] = true;
        let (w, u) = directed[k];
        out.push((w, u));
        for (j, &(a, b)) in directed.iter().enumerate() {
            if a == u && b != w && !done[j] {
                missing[j] -= 1;
            }
        }
    }
    out
}
