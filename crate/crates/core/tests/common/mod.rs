//! Fixtures and enumeration oracles shared by the integration suites.

#![allow(dead_code)]

use std::collections::BTreeSet;

use ijgp::benchgen::gen_random;
use ijgp::{build_network, BayesianNetwork, Evidence, Factor, Variable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const A: usize = 0;
pub const B: usize = 1;
pub const C: usize = 2;
pub const D: usize = 3;
pub const E: usize = 4;
pub const F: usize = 5;
pub const G: usize = 6;

/// Binary CPT from parents, child and the probability of child = 0 for each
/// parent configuration (first parent most significant).
pub fn binary_cpt(parents: &[usize], child: usize, p0: &[f64]) -> Factor {
    assert_eq!(p0.len(), 1 << parents.len());
    let mut scope = parents.to_vec();
    scope.push(child);
    let values = p0.iter().flat_map(|&p| [p, 1.0 - p]).collect();
    Factor::cpt(scope, vec![2; parents.len() + 1], values, child).unwrap()
}

pub fn network(n: usize, cpts: Vec<Factor>) -> BayesianNetwork {
    let edges = cpts
        .iter()
        .flat_map(|f| {
            let child = f.child().unwrap();
            f.scope().iter().filter(move |&&v| v != child).map(move |&p| (p, child)).collect::<Vec<_>>()
        })
        .collect();
    build_network((0..n).map(|i| Variable::new(i, 2)).collect(), cpts, edges).unwrap()
}

/// Seven binary variables A..G: p(a), p(b|a), p(c|a,b), p(d|b), p(e|b,f),
/// p(f|c,d), p(g|e,f). Its min-fill join tree has clusters ABC, BCDF, BEF
/// and EFG.
pub fn seven_variable_network() -> BayesianNetwork {
    network(
        7,
        vec![
            binary_cpt(&[], A, &[0.6]),
            binary_cpt(&[A], B, &[0.7, 0.2]),
            binary_cpt(&[A, B], C, &[0.9, 0.4, 0.3, 0.15]),
            binary_cpt(&[B], D, &[0.25, 0.8]),
            binary_cpt(&[B, F], E, &[0.5, 0.1, 0.65, 0.35]),
            binary_cpt(&[C, D], F, &[0.2, 0.55, 0.95, 0.45]),
            binary_cpt(&[E, F], G, &[0.05, 0.7, 0.6, 0.85]),
        ],
    )
}

/// A, B, C with P(C|A,B), P(B|A), P(A), listed in that order.
pub fn three_variable_network() -> BayesianNetwork {
    network(
        3,
        vec![
            binary_cpt(&[A, B], C, &[0.1, 0.6, 0.35, 0.8]),
            binary_cpt(&[A], B, &[0.3, 0.75]),
            binary_cpt(&[], A, &[0.45]),
        ],
    )
}

/// Value of `f` at the assignment given as (variable, value) pairs.
pub fn at(f: &Factor, pairs: &[(usize, usize)]) -> f64 {
    let assignment: Vec<usize> =
        f.scope().iter().map(|v| pairs.iter().find(|(w, _)| w == v).expect("variable assigned").1).collect();
    f.value_at(&assignment)
}

/// Every full assignment of `cards`, last variable fastest.
pub fn assignments(cards: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &c in cards {
        out = out.into_iter().flat_map(|a| (0..c).map(move |x| [a.clone(), vec![x]].concat())).collect();
    }
    out
}

pub fn joint_probability(net: &BayesianNetwork, x: &[usize]) -> f64 {
    net.cpts().iter().map(|f| f.eval(x)).product()
}

/// Unnormalized P(x_i, e) for every variable and value, and P(e), by
/// summing the product of all CPTs over the assignments consistent with
/// the evidence.
pub fn enumerate_joint(net: &BayesianNetwork, ev: &Evidence) -> (Vec<Vec<f64>>, f64) {
    let cards = net.cards();
    let mut joint: Vec<Vec<f64>> = cards.iter().map(|&c| vec![0.0; c]).collect();
    let mut total = 0.0;
    for x in assignments(&cards) {
        if ev.iter().any(|(v, val)| x[v] != val) {
            continue;
        }
        let p = joint_probability(net, &x);
        total += p;
        for (v, &xv) in x.iter().enumerate() {
            joint[v][xv] += p;
        }
    }
    (joint, total)
}

pub fn enumerate_marginals(net: &BayesianNetwork, ev: &Evidence) -> Vec<Vec<f64>> {
    let (joint, total) = enumerate_joint(net, ev);
    joint.iter().map(|r| r.iter().map(|p| p / total).collect()).collect()
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

/// Deterministic parameter mix for suite instance `j`: up to `max_n`
/// variables, cardinality 2 or 3, fan-in 1..=max_p.
pub fn suite_net(j: u64, max_n: usize, max_p: usize) -> BayesianNetwork {
    let i = j as usize;
    let n = 4 + (i * 7) % (max_n - 3);
    let k = if i % 4 == 0 && n <= 9 { 3 } else { 2 };
    let p = (1 + i % max_p).min(n - 1);
    let c = n - p - i % 2;
    gen_random(n, k, c, p, 1000 + j).unwrap()
}

/// `net` with roughly `fraction` of its CPT entries set to 0 and each
/// column renormalized; every column keeps at least one positive entry.
pub fn with_forced_zeros(net: &BayesianNetwork, fraction: f64, seed: u64) -> BayesianNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cpts = net
        .cpts()
        .iter()
        .map(|f| {
            let child = f.child().unwrap();
            let k = f.card_of(child).unwrap();
            // The child is last in generated scopes, so columns are contiguous.
            assert_eq!(f.scope().last(), Some(&child));
            let mut values = f.values().to_vec();
            for col in values.chunks_mut(k) {
                for x in col.iter_mut() {
                    if rng.random_bool(fraction) {
                        *x = 0.0;
                    }
                }
                if col.iter().all(|&x| x == 0.0) {
                    let keep = rng.random_range(0..k);
                    col[keep] = 1.0;
                }
                let s: f64 = col.iter().sum();
                col.iter_mut().for_each(|x| *x /= s);
            }
            Factor::cpt(f.scope().to_vec(), f.cards().to_vec(), values, child).unwrap()
        })
        .collect();
    build_network(net.variables().to_vec(), cpts, net.dag_edges().to_vec()).unwrap()
}

pub fn set(xs: &[usize]) -> BTreeSet<usize> {
    xs.iter().copied().collect()
}
