//! Exact baselines and accuracy metrics for approximate marginals.

use std::fmt::Write as _;

use thiserror::Error;

use crate::decomposition::{build_join_tree, elimination_order, OrderingHeuristic};
use crate::factor::VarId;
use crate::inference::{cte_bu, BeliefKind, Beliefs, InferenceError};
use crate::model::{moral_graph, BayesianNetwork, Evidence, ModelError};

/// Largest joint state space enumerated by [`brute_force_marginals`].
pub const BRUTE_FORCE_LIMIT: u128 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("joint state space of {0} assignments is too large to enumerate")]
    TooLarge(u128),
    #[error("the evidence has probability zero")]
    ZeroEvidence,
    #[error("belief shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("bit vectors have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Posterior marginals by enumerating every assignment consistent with the
/// evidence.
pub fn brute_force_marginals(net: &BayesianNetwork, evidence: &Evidence) -> Result<Beliefs, EvalError> {
    evidence.validate(net)?;
    let cards = net.cards();
    let free: Vec<VarId> = (0..cards.len()).filter(|&v| !evidence.contains(v)).collect();
    let states = free.iter().fold(1u128, |acc, &v| acc.saturating_mul(cards[v] as u128));
    if states > BRUTE_FORCE_LIMIT {
        return Err(EvalError::TooLarge(states));
    }
    let mut assignment = vec![0usize; cards.len()];
    for (v, x) in evidence.iter() {
        assignment[v] = x;
    }
    let mut joint: Vec<Vec<f64>> = cards.iter().map(|&c| vec![0.0; c]).collect();
    let mut total = 0.0;
    for _ in 0..states {
        let p = net.joint(&assignment);
        total += p;
        for (v, row) in joint.iter_mut().enumerate() {
            row[assignment[v]] += p;
        }
        for &v in free.iter().rev() {
            assignment[v] += 1;
            if assignment[v] < cards[v] {
                break;
            }
            assignment[v] = 0;
        }
    }
    if !(total > 0.0) {
        return Err(EvalError::ZeroEvidence);
    }
    let marginals = joint.iter().map(|row| row.iter().map(|p| p / total).collect()).collect();
    Ok(Beliefs { kind: BeliefKind::Exact, marginals, joint: Some(joint), normalizer: Some(total) })
}

/// Exact marginals by cluster-tree elimination on a min-fill join tree.
pub fn exact_marginals(net: &BayesianNetwork, evidence: &Evidence) -> Result<Beliefs, EvalError> {
    let (order, _) = elimination_order(&moral_graph(net), OrderingHeuristic::MinFill);
    let tree = build_join_tree(net, &order).expect("min-fill order is a permutation");
    match cte_bu(net, &tree, evidence) {
        Err(InferenceError::AllZero(_)) => Err(EvalError::ZeroEvidence),
        r => Ok(r?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    /// Fraction of variables whose most likely value differs.
    pub nhd: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    /// Pairs left out of `rel_error` because their exact value is 0.
    pub rel_skipped: usize,
    pub kl: f64,
    pub score: f64,
    pub wall_time_s: f64,
}

/// Position of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = k;
        }
    }
    best
}

/// Metrics over every variable.
pub fn metrics(approx: &Beliefs, exact: &Beliefs) -> Result<MetricsReport, EvalError> {
    let vars: Vec<VarId> = (0..exact.marginals.len()).collect();
    metrics_over(approx, exact, &vars)
}

/// Metrics restricted to `vars`. Abs, Rel and KL average over all
/// (variable, value) pairs; KL uses the natural logarithm.
pub fn metrics_over(approx: &Beliefs, exact: &Beliefs, vars: &[VarId]) -> Result<MetricsReport, EvalError> {
    if approx.marginals.len() != exact.marginals.len() {
        return Err(EvalError::ShapeMismatch(format!(
            "{} vs {} variables",
            approx.marginals.len(),
            exact.marginals.len()
        )));
    }
    let mut report = MetricsReport::default();
    if vars.is_empty() {
        report.score = 1.0;
        return Ok(report);
    }
    let (mut pairs, mut disagree, mut abs, mut rel, mut rel_n, mut kl) = (0usize, 0usize, 0.0, 0.0, 0usize, 0.0);
    for &v in vars {
        let (a, e) = (&approx.marginals[v], &exact.marginals[v]);
        if a.len() != e.len() {
            return Err(EvalError::ShapeMismatch(format!("variable {v} has {} vs {} values", a.len(), e.len())));
        }
        if argmax(a) != argmax(e) {
            disagree += 1;
        }
        let mut row_kl = 0.0;
        for (&p, &q) in a.iter().zip(e) {
            pairs += 1;
            let d = (p - q).abs();
            abs += d;
            if q > 0.0 {
                rel += d / q;
                rel_n += 1;
                row_kl += if p > 0.0 { q * (q / p).ln() } else { f64::INFINITY };
            } else {
                report.rel_skipped += 1;
            }
        }
        // Clamp rounding noise below zero.
        kl += row_kl.max(0.0);
    }
    report.nhd = disagree as f64 / vars.len() as f64;
    report.abs_error = abs / pairs as f64;
    report.rel_error = if rel_n > 0 { rel / rel_n as f64 } else { 0.0 };
    report.kl = kl / pairs as f64;
    report.score = score(report.kl);
    Ok(report)
}

/// `10^-kl`, and 0 for an infinite divergence.
pub fn score(kl: f64) -> f64 {
    if kl.is_finite() {
        10f64.powf(-kl)
    } else {
        0.0
    }
}

/// Fraction of positions that differ.
pub fn ber(decoded: &[usize], transmitted: &[usize]) -> Result<f64, EvalError> {
    if decoded.len() != transmitted.len() {
        return Err(EvalError::LengthMismatch(decoded.len(), transmitted.len()));
    }
    if decoded.is_empty() {
        return Ok(0.0);
    }
    let wrong = decoded.iter().zip(transmitted).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / decoded.len() as f64)
}

/// Most likely value of each listed variable.
pub fn decode(beliefs: &Beliefs, vars: &[VarId]) -> Vec<usize> {
    vars.iter().map(|&v| argmax(&beliefs.marginals[v])).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalStats {
    /// Bin `k` covers distances-to-the-boundary `[k, k+1) * 0.5 / bins`.
    pub bins: usize,
    pub exact_hist: Vec<usize>,
    pub approx_hist: Vec<usize>,
    /// Mean |approx - exact| over pairs whose exact value falls in the bin.
    pub recall_abs_error: Vec<Option<f64>>,
    /// Mean |approx - exact| over pairs whose approximate value falls in the bin.
    pub precision_abs_error: Vec<Option<f64>>,
}

fn bin_of(p: f64, bins: usize) -> usize {
    let m = p.min(1.0 - p).max(0.0);
    ((m * 2.0 * bins as f64).floor() as usize).min(bins - 1)
}

/// Interval statistics over explicit `(approx, exact)` pairs. Values above
/// 0.5 are mirrored, so a bin collects values near 0 and near 1 alike.
pub fn interval_stats_pairs(pairs: &[(f64, f64)], bins: usize) -> IntervalStats {
    let bins = bins.max(1);
    let mut stats = IntervalStats {
        bins,
        exact_hist: vec![0; bins],
        approx_hist: vec![0; bins],
        recall_abs_error: vec![None; bins],
        precision_abs_error: vec![None; bins],
    };
    let mut recall = vec![0.0; bins];
    let mut precision = vec![0.0; bins];
    for &(a, e) in pairs {
        let d = (a - e).abs();
        let be = bin_of(e, bins);
        let ba = bin_of(a, bins);
        stats.exact_hist[be] += 1;
        stats.approx_hist[ba] += 1;
        recall[be] += d;
        precision[ba] += d;
    }
    for k in 0..bins {
        if stats.exact_hist[k] > 0 {
            stats.recall_abs_error[k] = Some(recall[k] / stats.exact_hist[k] as f64);
        }
        if stats.approx_hist[k] > 0 {
            stats.precision_abs_error[k] = Some(precision[k] / stats.approx_hist[k] as f64);
        }
    }
    stats
}

/// [`interval_stats_pairs`] over every (variable, value) pair.
pub fn interval_stats(approx: &Beliefs, exact: &Beliefs, bins: usize) -> IntervalStats {
    let pairs: Vec<(f64, f64)> = approx
        .marginals
        .iter()
        .zip(&exact.marginals)
        .flat_map(|(a, e)| a.iter().copied().zip(e.iter().copied()))
        .collect();
    interval_stats_pairs(&pairs, bins)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub instance: String,
    pub algorithm: String,
    pub ibound: Option<usize>,
    pub iterations: Option<usize>,
    pub evidence: usize,
    pub report: MetricsReport,
}

pub const CSV_HEADER: &str =
    "instance,algorithm,ibound,iterations,evidence,nhd,abs_error,rel_error,rel_skipped,kl,score,wall_time_s";

/// CSV text with a header line; missing i-bounds and iteration counts are
/// left empty.
pub fn to_csv(rows: &[CsvRow]) -> String {
    let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let m = &r.report;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:e},{:e},{:e},{},{:e},{:e},{:e}",
            r.instance,
            r.algorithm,
            opt(r.ibound),
            opt(r.iterations),
            r.evidence,
            m.nhd,
            m.abs_error,
            m.rel_error,
            m.rel_skipped,
            m.kl,
            m.score,
            m.wall_time_s
        );
    }
    out
}
