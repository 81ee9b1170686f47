//! Greedy largest-first partitioning of a cluster's functions into
//! mini-clusters of bounded scope.

use std::collections::BTreeSet;

use crate::factor::{Factor, VarId};

use super::InferenceError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniCluster {
    /// Input positions, ascending.
    pub members: Vec<usize>,
    pub scope: BTreeSet<VarId>,
}

/// Partition scopes so that every group's union has at most `i` variables.
///
/// Scopes are taken largest first (ties: lower position). Each one joins the
/// first group, in creation order, that can absorb it, otherwise it opens a
/// new group. The returned groups are listed by their lowest member position.
pub fn partition_scopes(scopes: &[&[VarId]], i: usize) -> Result<Vec<MiniCluster>, InferenceError> {
    if let Some((index, s)) = scopes.iter().enumerate().find(|(_, s)| s.len() > i) {
        return Err(InferenceError::FunctionTooLarge { index, size: s.len(), bound: i });
    }
    Ok(partition_scopes_relaxed(scopes, i))
}

/// [`partition_scopes`] that accepts scopes wider than `i`; each of those
/// ends up alone in its own group.
pub fn partition_scopes_relaxed(scopes: &[&[VarId]], i: usize) -> Vec<MiniCluster> {
    let mut order: Vec<usize> = (0..scopes.len()).collect();
    order.sort_by(|&a, &b| scopes[b].len().cmp(&scopes[a].len()).then(a.cmp(&b)));

    let mut groups: Vec<MiniCluster> = Vec::new();
    for idx in order {
        let s = scopes[idx];
        let slot = groups.iter().position(|g| {
            let extra = s.iter().filter(|v| !g.scope.contains(v)).count();
            g.scope.len() + extra <= i
        });
        match slot {
            Some(k) => {
                groups[k].members.push(idx);
                groups[k].scope.extend(s.iter().copied());
            }
            None => groups.push(MiniCluster { members: vec![idx], scope: s.iter().copied().collect() }),
        }
    }
    for g in &mut groups {
        g.members.sort_unstable();
    }
    groups.sort_by_key(|g| g.members[0]);
    groups
}

/// [`partition_scopes`] over factor scopes.
pub fn partition_cluster(functions: &[Factor], i: usize) -> Result<Vec<MiniCluster>, InferenceError> {
    let scopes: Vec<&[VarId]> = functions.iter().map(Factor::scope).collect();
    partition_scopes(&scopes, i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oversize_scope_stands_alone() {
        let s: Vec<&[usize]> = vec![&[0, 1], &[0, 1, 2, 3], &[1], &[2, 4]];
        assert!(matches!(partition_scopes(&s, 2), Err(InferenceError::FunctionTooLarge { index: 1, size: 4, bound: 2 })));
        let p = partition_scopes_relaxed(&s, 2);
        let members: Vec<Vec<usize>> = p.iter().map(|g| g.members.clone()).collect();
        assert_eq!(members, vec![vec![0, 2], vec![1], vec![3]]);
    }

    #[test]
    fn everything_fits_in_one() {
        let s: Vec<&[usize]> = vec![&[0, 1], &[1, 2], &[2]];
        let p = partition_scopes(&s, 3).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].members, vec![0, 1, 2]);
    }

    #[test]
    fn worked_example_cluster() {
        // p(d|b), p(f|c,d), h(b,c) with B=1 C=2 D=3 F=5
        let s: Vec<&[usize]> = vec![&[1, 3], &[2, 3, 5], &[1, 2]];
        let p = partition_scopes(&s, 3).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].members, vec![0, 2]);
        assert_eq!(p[1].members, vec![1]);
    }

    #[test]
    fn oversize_function() {
        let s: Vec<&[usize]> = vec![&[0], &[0, 1, 2]];
        assert_eq!(
            partition_scopes(&s, 2),
            Err(InferenceError::FunctionTooLarge { index: 1, size: 3, bound: 2 })
        );
    }
}
