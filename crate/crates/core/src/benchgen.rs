//! Seeded generators for random, grid, noisy-OR and coding networks.
//!
//! Every generator draws from ChaCha8 seeded with `seed_from_u64(seed)`;
//! network structure and tables use stream 0 and evidence sampling uses
//! stream 1, so the same seed always reproduces the same files on every
//! platform.

use rand::distr::Open01;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::factor::{Factor, VarId};
use crate::model::{build_network, BayesianNetwork, Evidence, ModelError, Variable};

const NETWORK_STREAM: u64 = 0;
const EVIDENCE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// `n` variables of cardinality `k`; `c` of them get `p` random parents.
    Random { n: usize, k: usize, c: usize, p: usize },
    /// `m` by `m` grid, arcs pointing right and down.
    Grid { m: usize, k: usize },
    NoisyOr { n: usize, p: usize, leak: f64, inhibition: (f64, f64) },
    /// `n` transmitted bits, parity fan-in `p`, Gaussian channel noise `sigma`.
    Coding { n: usize, p: usize, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    pub family: Family,
    pub seed: u64,
}

/// A generated network with its evidence and, for coding networks, the
/// transmitted information bits.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub net: BayesianNetwork,
    pub evidence: Evidence,
    pub truth: Option<Vec<usize>>,
}

pub fn generate(spec: &GeneratorSpec) -> Result<Instance, GenError> {
    let seed = spec.seed;
    let plain = |net| Instance { net, evidence: Evidence::empty(), truth: None };
    Ok(match spec.family {
        Family::Random { n, k, c, p } => plain(gen_random(n, k, c, p, seed)?),
        Family::Grid { m, k } => plain(gen_grid(m, k, seed)?),
        Family::NoisyOr { n, p, leak, inhibition } => plain(gen_noisy_or(n, p, seed, leak, inhibition)?),
        Family::Coding { n, p, sigma } => {
            let (net, truth, evidence) = gen_coding(n, p, sigma, seed)?;
            Instance { net, evidence, truth: Some(truth) }
        }
    })
}

/// Random table over `parents` then `child`, each column drawn uniformly
/// from (0, 1) and normalized.
fn random_cpt(rng: &mut ChaCha8Rng, parents: &[VarId], child: VarId, k: usize) -> Factor {
    let configs = k.pow(parents.len() as u32);
    let mut values = Vec::with_capacity(configs * k);
    for _ in 0..configs {
        let col: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Open01)).collect();
        let s: f64 = col.iter().sum();
        values.extend(col.iter().map(|x| x / s));
    }
    let mut scope = parents.to_vec();
    scope.push(child);
    Factor::cpt(scope, vec![k; parents.len() + 1], values, child).expect("well-formed table")
}

fn assemble(k: usize, parents: &[Vec<VarId>], cpts: Vec<Factor>) -> Result<BayesianNetwork, GenError> {
    let variables = (0..parents.len()).map(|i| Variable::new(i, k)).collect();
    let edges = parents.iter().enumerate().flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c))).collect();
    Ok(build_network(variables, cpts, edges)?)
}

/// Pick `c` children among `p..n` and give each `p` distinct earlier parents.
fn random_structure(rng: &mut ChaCha8Rng, n: usize, c: usize, p: usize) -> Result<Vec<Vec<VarId>>, GenError> {
    if p >= n {
        return Err(GenError::ParamOutOfRange(format!("P = {p} must be below N = {n}")));
    }
    if c > n.saturating_sub(p) {
        return Err(GenError::ParamOutOfRange(format!("C = {c} exceeds N - P = {}", n.saturating_sub(p))));
    }
    let mut children: Vec<usize> = index::sample(rng, n - p, c).into_iter().map(|i| i + p).collect();
    children.sort_unstable();
    let mut parents = vec![Vec::new(); n];
    for ch in children {
        let mut ps: Vec<usize> = index::sample(rng, ch, p).into_vec();
        ps.sort_unstable();
        parents[ch] = ps;
    }
    Ok(parents)
}

/// Random network over `n` variables of cardinality `k`, numbered in
/// topological order.
pub fn gen_random(n: usize, k: usize, c: usize, p: usize, seed: u64) -> Result<BayesianNetwork, GenError> {
    if k == 0 {
        return Err(GenError::ParamOutOfRange("K must be positive".into()));
    }
    let mut r = rng(seed, NETWORK_STREAM);
    let parents = random_structure(&mut r, n, c, p)?;
    let cpts = parents.iter().enumerate().map(|(v, ps)| random_cpt(&mut r, ps, v, k)).collect();
    assemble(k, &parents, cpts)
}

/// `m * m` grid; cell `(r, c)` is variable `r * m + c` with parents above
/// and to the left.
pub fn gen_grid(m: usize, k: usize, seed: u64) -> Result<BayesianNetwork, GenError> {
    if m < 2 || k == 0 {
        return Err(GenError::ParamOutOfRange(format!("grid needs M >= 2 and K >= 1, got M = {m}, K = {k}")));
    }
    let mut r = rng(seed, NETWORK_STREAM);
    let mut parents = vec![Vec::new(); m * m];
    for row in 0..m {
        for col in 0..m {
            let v = row * m + col;
            if row > 0 {
                parents[v].push(v - m);
            }
            if col > 0 {
                parents[v].push(v - 1);
            }
        }
    }
    let cpts = parents.iter().enumerate().map(|(v, ps)| random_cpt(&mut r, ps, v, k)).collect();
    assemble(k, &parents, cpts)
}

/// Noisy-OR table: `P(X = 0 | pa) = (1 - leak) * prod of q_j over parents
/// that are on`.
pub fn noisy_or_cpt(parents: &[VarId], child: VarId, q: &[f64], leak: f64) -> Factor {
    let configs = 1usize << parents.len();
    let mut values = Vec::with_capacity(2 * configs);
    for cfg in 0..configs {
        let mut off = 1.0 - leak;
        for (j, qj) in q.iter().enumerate() {
            // The first parent is the most significant bit of `cfg`.
            if (cfg >> (parents.len() - 1 - j)) & 1 == 1 {
                off *= qj;
            }
        }
        values.push(off);
        values.push(1.0 - off);
    }
    let mut scope = parents.to_vec();
    scope.push(child);
    Factor::cpt(scope, vec![2; parents.len() + 1], values, child).expect("well-formed table")
}

/// Binary noisy-OR network: the structure of [`gen_random`] with every
/// eligible variable a child, inhibitions drawn uniformly from `inhibition`.
pub fn gen_noisy_or(
    n: usize,
    p: usize,
    seed: u64,
    leak: f64,
    inhibition: (f64, f64),
) -> Result<BayesianNetwork, GenError> {
    if !(0.0..=1.0).contains(&leak) || !(0.0 <= inhibition.0 && inhibition.0 <= inhibition.1 && inhibition.1 <= 1.0) {
        return Err(GenError::ParamOutOfRange("leak and inhibitions must lie in [0, 1]".into()));
    }
    if p >= n {
        return Err(GenError::ParamOutOfRange(format!("P = {p} must be below N = {n}")));
    }
    let mut r = rng(seed, NETWORK_STREAM);
    let parents = random_structure(&mut r, n, n - p, p)?;
    let cpts = parents
        .iter()
        .enumerate()
        .map(|(v, ps)| {
            if ps.is_empty() {
                random_cpt(&mut r, ps, v, 2)
            } else {
                let q: Vec<f64> = ps
                    .iter()
                    .map(|_| inhibition.0 + (inhibition.1 - inhibition.0) * r.random::<f64>())
                    .collect();
                noisy_or_cpt(ps, v, &q, leak)
            }
        })
        .collect();
    assemble(2, &parents, cpts)
}

/// Signal level of bit `x` on the channel.
fn level(x: usize) -> f64 {
    2.0 * x as f64 - 1.0
}

/// `P(Y = 1 | x)` for a received value `y`: the Gaussian likelihood of bit
/// `x` normalized over both bit values.
fn channel_likelihood(y: f64, x: usize, sigma: f64) -> f64 {
    let dx = (y - level(x)).powi(2);
    let dother = (y - level(1 - x)).powi(2);
    if sigma <= 0.0 {
        return if dx < dother { 1.0 } else if dx > dother { 0.0 } else { 0.5 };
    }
    // L_x / (L_x + L_other) = 1 / (1 + exp(log L_other - log L_x))
    1.0 / (1.0 + ((dx - dother) / (2.0 * sigma * sigma)).exp())
}

/// Linear block code. Variables `0..n/2` are information bits with uniform
/// priors, `n/2..n` parity bits (XOR of `p` random information bits) and
/// `n..2n` binary channel observations, one per bit. Each observation `Y_j`
/// is observed at 1 with `P(Y_j = 1 | x)` proportional to the Gaussian
/// density of the received value at level `2x - 1`, the transmitted level
/// plus noise. Returns the network, the transmitted information bits and
/// the evidence.
pub fn gen_coding(n: usize, p: usize, sigma: f64, seed: u64) -> Result<(BayesianNetwork, Vec<usize>, Evidence), GenError> {
    if n == 0 || n % 2 != 0 {
        return Err(GenError::ParamOutOfRange(format!("N = {n} must be positive and even")));
    }
    if p == 0 || p > n / 2 {
        return Err(GenError::ParamOutOfRange(format!("P = {p} must lie in 1..={}", n / 2)));
    }
    if !(sigma >= 0.0) {
        return Err(GenError::ParamOutOfRange(format!("sigma = {sigma} must be non-negative")));
    }
    let half = n / 2;
    let mut r = rng(seed, NETWORK_STREAM);
    let mut parents: Vec<Vec<VarId>> = vec![Vec::new(); 2 * n];
    let mut cpts = Vec::with_capacity(2 * n);
    for v in 0..half {
        cpts.push(Factor::cpt(vec![v], vec![2], vec![0.5, 0.5], v).expect("prior"));
    }
    for v in half..n {
        let mut ps: Vec<usize> = index::sample(&mut r, half, p).into_vec();
        ps.sort_unstable();
        let configs = 1usize << p;
        let mut values = Vec::with_capacity(2 * configs);
        for cfg in 0..configs {
            let parity = (cfg.count_ones() % 2) as usize;
            values.push(if parity == 0 { 1.0 } else { 0.0 });
            values.push(if parity == 1 { 1.0 } else { 0.0 });
        }
        let mut scope = ps.clone();
        scope.push(v);
        cpts.push(Factor::cpt(scope, vec![2; p + 1], values, v).expect("parity table"));
        parents[v] = ps;
    }
    let info: Vec<usize> = (0..half).map(|_| usize::from(r.random_bool(0.5))).collect();
    let mut bits = info.clone();
    for v in half..n {
        bits.push(parents[v].iter().map(|&u| info[u]).sum::<usize>() % 2);
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| GenError::ParamOutOfRange(e.to_string()))?;
    let mut evidence = Evidence::empty();
    for (j, &x) in bits.iter().enumerate() {
        let y = level(x) + noise.sample(&mut r);
        let obs = n + j;
        let on: Vec<f64> = (0..2).map(|b| channel_likelihood(y, b, sigma)).collect();
        let values = vec![1.0 - on[0], on[0], 1.0 - on[1], on[1]];
        cpts.push(Factor::cpt(vec![j, obs], vec![2, 2], values, obs).expect("channel table"));
        parents[obs] = vec![j];
        evidence.insert(obs, 1);
    }
    let net = assemble(2, &parents, cpts)?;
    Ok((net, info, evidence))
}

/// Draw one assignment by ancestral sampling and reveal `count` of its
/// variables, chosen uniformly.
pub fn sample_evidence(net: &BayesianNetwork, count: usize, seed: u64) -> Result<Evidence, GenError> {
    let n = net.num_variables();
    if count > n {
        return Err(GenError::ParamOutOfRange(format!("{count} evidence variables requested out of {n}")));
    }
    if net.is_permissive() {
        return Err(GenError::ParamOutOfRange("ancestral sampling needs a Bayesian network".into()));
    }
    let mut r = rng(seed, EVIDENCE_STREAM);
    let sample = forward_sample(net, &mut r);
    let mut chosen = index::sample(&mut r, n, count).into_vec();
    chosen.sort_unstable();
    Ok(Evidence::from_pairs(chosen.into_iter().map(|v| (v, sample[v]))))
}

fn forward_sample(net: &BayesianNetwork, r: &mut ChaCha8Rng) -> Vec<usize> {
    let mut x = vec![0usize; net.num_variables()];
    for v in net.topological_order() {
        let f = &net.cpts()[net.cpt_index(v).expect("one CPT per variable")];
        let u: f64 = r.random();
        let card = net.cardinality(v);
        let mut acc = 0.0;
        let mut pick = None;
        let mut last_positive = 0;
        for val in 0..card {
            x[v] = val;
            let p = f.eval(&x);
            if p > 0.0 {
                last_positive = val;
            }
            acc += p;
            if pick.is_none() && u < acc && p > 0.0 {
                pick = Some(val);
            }
        }
        x[v] = pick.unwrap_or(last_positive);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_children_means_independent_priors() {
        let net = gen_random(6, 3, 0, 2, 7).unwrap();
        assert!(net.cpts().iter().all(|f| f.scope().len() == 1));
    }

    #[test]
    fn random_shape() {
        let net = gen_random(50, 2, 45, 3, 1).unwrap();
        let with_parents = net.cpts().iter().filter(|f| f.scope().len() == 4).count();
        assert_eq!(with_parents, 45);
        assert_eq!(net.dag_edges().len(), 135);
    }

    #[test]
    fn too_many_children() {
        assert!(matches!(gen_random(5, 2, 4, 2, 0), Err(GenError::ParamOutOfRange(_))));
    }

    #[test]
    fn same_seed_same_network() {
        assert_eq!(gen_random(20, 3, 15, 2, 42).unwrap(), gen_random(20, 3, 15, 2, 42).unwrap());
        assert_ne!(gen_random(20, 3, 15, 2, 42).unwrap(), gen_random(20, 3, 15, 2, 43).unwrap());
        assert_eq!(gen_grid(4, 2, 5).unwrap(), gen_grid(4, 2, 5).unwrap());
    }

    #[test]
    fn two_by_two_grid() {
        let net = gen_grid(2, 2, 0).unwrap();
        assert_eq!(net.num_variables(), 4);
        assert_eq!(net.dag_edges(), &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert_eq!(net.parents(3), vec![1, 2]);
        assert_eq!(gen_grid(9, 2, 0).unwrap().num_variables(), 81);
    }

    #[test]
    fn noisy_or_identities() {
        let f = noisy_or_cpt(&[0], 1, &[0.2], 0.0);
        // parent off, then parent on
        assert_eq!(f.values(), &[1.0, 0.0, 0.2, 0.8]);
        let g = noisy_or_cpt(&[0, 1], 2, &[0.5, 0.2], 0.0);
        assert_eq!(g.value_at(&[1, 1, 0]), 0.5 * 0.2);
        assert_eq!(g.value_at(&[0, 1, 0]), 0.2);
        let net = gen_noisy_or(50, 3, 9, 0.0, (0.0, 0.2)).unwrap();
        assert_eq!(net.cpts().iter().filter(|f| f.scope().len() == 4).count(), 47);
    }

    #[test]
    fn coding_layout() {
        let (net, truth, ev) = gen_coding(10, 3, 0.3, 2).unwrap();
        assert_eq!(net.num_variables(), 20);
        assert_eq!(truth.len(), 5);
        assert_eq!(ev.len(), 10);
        assert!((10..20).all(|v| ev.get(v) == Some(1)));
        assert!(matches!(gen_coding(7, 3, 0.3, 2), Err(GenError::ParamOutOfRange(_))));
    }

    #[test]
    fn channel_is_a_likelihood_ratio() {
        let sigma: f64 = 0.5;
        let y: f64 = 0.8;
        let l = |x: f64| (-(y - x).powi(2) / (2.0 * sigma * sigma)).exp();
        let p1 = channel_likelihood(y, 1, sigma);
        let p0 = channel_likelihood(y, 0, sigma);
        assert!((p1 - l(1.0) / (l(-1.0) + l(1.0))).abs() < 1e-15);
        assert!((p0 + p1 - 1.0).abs() < 1e-15);
        assert_eq!(channel_likelihood(-0.9, 0, 0.0), 1.0);
        assert_eq!(channel_likelihood(0.0, 0, 0.0), 0.5);
    }

    #[test]
    fn evidence_counts() {
        let net = gen_random(8, 2, 6, 2, 3).unwrap();
        assert!(sample_evidence(&net, 0, 1).unwrap().is_empty());
        let all = sample_evidence(&net, 8, 1).unwrap();
        assert_eq!(all.len(), 8);
        let x: Vec<usize> = (0..8).map(|v| all.get(v).unwrap()).collect();
        assert!(net.joint(&x) > 0.0);
        assert!(sample_evidence(&net, 9, 1).is_err());
    }
}
