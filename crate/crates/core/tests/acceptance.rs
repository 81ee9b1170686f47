//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use ijgp::benchgen::{gen_coding, gen_grid, gen_random, sample_evidence, Family};
use ijgp::cli::bench;
use ijgp::decomposition::{
    build_join_tree, elimination_order, join_graph_structuring, join_graph_structuring_relaxed,
    validate_decomposition, OrderingHeuristic, TreeDecomposition,
};
use ijgp::eval::{ber, brute_force_marginals, decode, exact_marginals, interval_stats_pairs, metrics, metrics_over, score, to_csv};
use ijgp::flat::zero_belief_audit;
use ijgp::inference::{
    cte_bu, ibp, ijgp, BeliefKind, Beliefs, ClusterTreeEngine, ConvergenceSpec, IjgpEngine, InferenceError, McMode,
};
use ijgp::io::write_marginals;
use ijgp::model::moral_graph;
use ijgp::{build_network, BayesianNetwork, Evidence, Factor, Variable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Instance `j` of the 200-net exactness suite: N in 4..=12, K in {2, 3},
/// fan-in 1..=3 and 0..=4 observed variables.
fn exactness_instance(j: u64) -> (BayesianNetwork, Evidence) {
    let i = j as usize;
    let n = 4 + i % 9;
    let k = if (i / 9) % 2 == 1 && n <= 11 { 3 } else { 2 };
    let p = (1 + i % 3).min(n - 1);
    let c = n - p - (i / 3) % 2;
    let net = gen_random(n, k, c, p, 10_000 + j).unwrap();
    let ev = sample_evidence(&net, i % 5, j).unwrap();
    (net, ev)
}

fn tree(net: &BayesianNetwork, h: OrderingHeuristic) -> TreeDecomposition {
    let (order, _) = elimination_order(&moral_graph(net), h);
    build_join_tree(net, &order).unwrap()
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    for j in 0..200 {
        let (net, ev) = exactness_instance(j);
        let got = cte_bu(&net, &tree(&net, OrderingHeuristic::MinFill), &ev).map_err(|e| format!("net {j}: {e}"))?;
        let exact = brute_force_marginals(&net, &ev).unwrap();
        worst = worst.max(max_abs_diff(&got.marginals, &exact.marginals));
    }
    check(worst < 1e-9, format!("cte_bu vs enumeration on 200 nets, max abs error {worst:.3e} (< 1e-9)"))
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for j in 0..200 {
        let (net, ev) = exactness_instance(j);
        for h in [OrderingHeuristic::MinFill, OrderingHeuristic::MinInducedWidth] {
            let t = tree(&net, h);
            let exact = cte_bu(&net, &t, &ev).unwrap();
            let run = ijgp(&net, &t.to_join_graph(), &ev, ConvergenceSpec::iterations(1)).unwrap();
            if run.iterations != 1 {
                return Err(format!("net {j}: {} iterations", run.iterations));
            }
            worst = worst.max(max_abs_diff(&run.beliefs.marginals, &exact.marginals));
        }
    }
    check(worst < 1e-9, format!("ijgp on join trees after 1 iteration vs cte_bu, 200 nets x 2 orderings, max {worst:.3e}"))
}

fn random_cpt(rng: &mut ChaCha8Rng, parents: &[usize], child: usize, k: usize) -> Factor {
    let mut scope = parents.to_vec();
    scope.sort_unstable();
    scope.push(child);
    let cols = k.pow(parents.len() as u32);
    let mut values = Vec::with_capacity(cols * k);
    for _ in 0..cols {
        let col: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = col.iter().sum();
        values.extend(col.iter().map(|x| x / s));
    }
    Factor::cpt(scope, vec![k; parents.len() + 1], values, child).unwrap()
}

/// Random tree skeleton with random arc directions, fan-in at most 3.
fn polytree(j: u64) -> BayesianNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(20_000 + j);
    let k = if j % 3 == 0 { 3 } else { 2 };
    let n = if k == 3 { 4 + (j as usize % 6) } else { 4 + (j as usize % 11) };
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        if rng.random_bool(0.5) && parents[u].len() < 3 {
            parents[u].push(v);
            edges.push((v, u));
        } else {
            parents[v].push(u);
            edges.push((u, v));
        }
    }
    let cpts = (0..n).map(|v| random_cpt(&mut rng, &parents[v], v, k)).collect();
    build_network((0..n).map(|i| Variable::new(i, k)).collect(), cpts, edges).unwrap()
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    for j in 0..100 {
        let net = polytree(j);
        let ev = sample_evidence(&net, j as usize % 4, j).unwrap();
        let run = ibp(&net, &ev, ConvergenceSpec::iterations(1)).unwrap();
        let exact = brute_force_marginals(&net, &ev).unwrap();
        worst = worst.max(max_abs_diff(&run.beliefs.marginals, &exact.marginals));
    }
    check(worst < 1e-9, format!("ibp after 1 iteration on 100 polytrees, max abs error {worst:.3e}"))
}

fn mc(net: &BayesianNetwork, t: &TreeDecomposition, ev: &Evidence, i: usize, mode: McMode) -> Beliefs {
    ClusterTreeEngine::mini_cluster(net, t, ev, i, mode).allow_oversize().run().unwrap().beliefs
}

fn criterion_4() -> Outcome {
    let (mut upper_slack, mut lower_slack) = (f64::INFINITY, f64::INFINITY);
    let mut checked = 0usize;
    for j in 0..100 {
        let (net, ev) = exactness_instance(j);
        let t = tree(&net, OrderingHeuristic::MinFill);
        let exact = brute_force_marginals(&net, &ev).unwrap();
        let exact_joint = exact.joint.as_ref().unwrap();
        for i in [2, 3, 4] {
            let up = mc(&net, &t, &ev, i, McMode::Upper);
            let lo = mc(&net, &t, &ev, i, McMode::Lower);
            let (uj, lj) = (up.joint.unwrap(), lo.joint.unwrap());
            for v in 0..net.num_variables() {
                for x in 0..net.cardinality(v) {
                    upper_slack = upper_slack.min(uj[v][x] - exact_joint[v][x]);
                    lower_slack = lower_slack.min(exact_joint[v][x] - lj[v][x]);
                    checked += 1;
                }
            }
        }
        let w = t.treewidth();
        let cte = cte_bu(&net, &t, &ev).unwrap();
        for mode in [McMode::Upper, McMode::Lower, McMode::Approx] {
            let full = ClusterTreeEngine::mini_cluster(&net, &t, &ev, w + 1, mode).run().unwrap().beliefs;
            if full.joint != cte.joint {
                return Err(format!("net {j}: MC-BU({}) {mode:?} differs from cte_bu", w + 1));
            }
        }
    }
    check(
        upper_slack >= -1e-12 && lower_slack >= -1e-12,
        format!(
            "{checked} (net, i, variable, value) checks: min UPPER - exact {upper_slack:.3e}, min exact - LOWER {lower_slack:.3e}; MC-BU(w*+1) equals cte_bu bit for bit"
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut worst: f64 = 0.0;
    for j in 0..100 {
        let (net, ev) = exactness_instance(j);
        let t = tree(&net, OrderingHeuristic::MinFill);
        for i in [2, 3, 4] {
            let mean = mc(&net, &t, &ev, i, McMode::Approx);
            let sum = mc(&net, &t, &ev, i, McMode::Sum);
            worst = worst.max(max_abs_diff(&mean.marginals, &sum.marginals));
        }
    }
    check(worst < 1e-12, format!("normalized mean vs all-sum beliefs, 100 nets x i in {{2,3,4}}, max {worst:.3e}"))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn criterion_6() -> Outcome {
    let ibounds = [2, 5, 8];
    let mut abs: Vec<Vec<f64>> = vec![Vec::new(); ibounds.len()];
    let (mut kl1, mut kl10) = (Vec::new(), Vec::new());
    for j in 0..50 {
        let net = gen_random(50, 2, 45, 3, 30_000 + j).unwrap();
        let ev = sample_evidence(&net, 5, j).unwrap();
        let t = tree(&net, OrderingHeuristic::MinFill);
        let exact = cte_bu(&net, &t, &ev).map_err(|e| format!("net {j}: exact baseline failed: {e}"))?;
        let free: Vec<usize> = (0..net.num_variables()).filter(|&v| !ev.contains(v)).collect();
        for (s, &i) in ibounds.iter().enumerate() {
            let b = mc(&net, &t, &ev, i, McMode::Approx);
            abs[s].push(metrics_over(&b, &exact, &free).unwrap().abs_error);
        }
        let jg = join_graph_structuring_relaxed(&net, 2).unwrap();
        let run = ijgp(&net, &jg, &ev, ConvergenceSpec { max_iterations: 10, tolerance: 1e-300, rescale: true }).unwrap();
        let at = |it: usize| Beliefs {
            kind: BeliefKind::Approximate,
            marginals: run.trace[it - 1].marginals.clone(),
            joint: None,
            normalizer: None,
        };
        kl1.push(metrics_over(&at(1), &exact, &free).unwrap().kl);
        kl10.push(metrics_over(&at(run.trace.len()), &exact, &free).unwrap().kl);
    }
    let m: Vec<f64> = abs.into_iter().map(median).collect();
    let (k1, k10) = (median(kl1), median(kl10));
    check(
        m[0] >= m[1] && m[1] >= m[2] && k10 < k1,
        format!(
            "median MC-BU abs error i=2,5,8: {:.3e} {:.3e} {:.3e}; median IJGP(2) KL 1 vs 10 iterations: {k1:.3e} vs {k10:.3e}",
            m[0], m[1], m[2]
        ),
    )
}

/// Zero-belief audits on 100 nets with forced zeros; returns
/// `(passed, sweeps_within_bound, detail)`.
fn zero_suite() -> (Outcome, Outcome) {
    let mut failures = Vec::new();
    let mut over_bound = Vec::new();
    let (mut zeros, mut max_ratio) = (0usize, 0f64);
    for j in 0..100u64 {
        let (base, _) = exactness_instance(j + 500);
        let net = with_forced_zeros(&base, 0.3, 40_000 + j);
        let ev = sample_evidence(&net, j as usize % 4, j).unwrap();
        let jg = if j % 4 == 3 {
            ijgp::decomposition::singleton_dual_join_graph(&net).unwrap().graph
        } else {
            join_graph_structuring_relaxed(&net, 2 + j as usize % 3).unwrap()
        };
        let report = zero_belief_audit(&net, &jg, &ev, ConvergenceSpec::default()).unwrap();
        if !report.passed() || report.checks.len() != 4 {
            failures.push(format!("net {j}:\n{report}"));
        }
        zeros += report.zeros.len();
        if report.rdac_iterations > report.rdac_bound {
            over_bound.push(format!("net {j}: {} > {}", report.rdac_iterations, report.rdac_bound));
        }
        max_ratio = max_ratio.max(report.rdac_iterations as f64 / report.rdac_bound as f64);
    }
    let seven = if failures.is_empty() {
        Ok(format!("all four audit assertions hold on 100 nets with 30% forced zeros ({zeros} zero beliefs)"))
    } else {
        Err(failures.join("\n"))
    };
    let eight = if over_bound.is_empty() {
        Ok(format!("arc-consistency sweeps within m*r on all 100 audits (max ratio {max_ratio:.3})"))
    } else {
        Err(over_bound.join("; "))
    };
    (seven, eight)
}

fn criterion_9() -> Outcome {
    let sigmas = [0.22, 0.32, 0.51];
    let mut means = Vec::new();
    for &sigma in &sigmas {
        let mut total = 0.0;
        for j in 0..50 {
            let (net, truth, ev) = gen_coding(100, 3, sigma, 50_000 + j).unwrap();
            let run = ibp(&net, &ev, ConvergenceSpec::default()).unwrap();
            let info: Vec<usize> = (0..truth.len()).collect();
            total += ber(&decode(&run.beliefs, &info), &truth).unwrap();
        }
        means.push(total / 50.0);
    }
    check(
        means[0] <= 0.01 && means[0] <= means[1] && means[1] <= means[2],
        format!("mean IBP BER at sigma 0.22, 0.32, 0.51: {:.4} {:.4} {:.4}", means[0], means[1], means[2]),
    )
}

/// 5x5 grid whose CPT columns put 1e-12 on one value, observed at
/// unlikely values along the border.
fn extreme_grid() -> (BayesianNetwork, Evidence) {
    let base = gen_grid(5, 2, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let eps = 1e-12;
    let cpts: Vec<Factor> = base
        .cpts()
        .iter()
        .map(|f| {
            let child = f.child().unwrap();
            let values = (0..f.len() / 2)
                .flat_map(|_| if rng.random_bool(0.5) { [1.0 - eps, eps] } else { [eps, 1.0 - eps] })
                .collect();
            Factor::cpt(f.scope().to_vec(), f.cards().to_vec(), values, child).unwrap()
        })
        .collect();
    let net = build_network(base.variables().to_vec(), cpts, base.dag_edges().to_vec()).unwrap();
    let mut ev = Evidence::empty();
    for v in [4, 9, 14, 19, 20, 21, 22, 23, 24] {
        // The less likely value given the evidence so far.
        let post = exact_marginals(&net, &ev).unwrap().marginals[v].clone();
        ev.insert(v, if post[0] < post[1] { 0 } else { 1 });
    }
    (net, ev)
}

fn criterion_10() -> Outcome {
    let (net, ev) = extreme_grid();
    let jg = join_graph_structuring(&net, 3).unwrap();
    let spec = ConvergenceSpec { max_iterations: 500, tolerance: 1e-300, rescale: true };
    let mut engine = IjgpEngine::new(&net, jg.clone(), &ev, spec).unwrap();
    let mut smallest = f64::INFINITY;
    for it in 1..=500 {
        engine.iterate().map_err(|e| format!("rescaled run, iteration {it}: {e}"))?;
        for m in engine.messages().values() {
            for &x in m.values() {
                if x <= 0.0 {
                    return Err(format!("rescaled run, iteration {it}: message entry {x}"));
                }
                smallest = smallest.min(x);
            }
        }
    }
    let beliefs = engine.beliefs().unwrap();
    let free = beliefs.marginals.iter().enumerate().filter(|(v, _)| !ev.contains(*v));
    if free.flat_map(|(_, row)| row).any(|&p| p <= 0.0) {
        return Err("rescaled run produced a zero belief".into());
    }

    let raw = ConvergenceSpec { rescale: false, ..spec };
    let mut engine = IjgpEngine::new(&net, jg, &ev, raw).unwrap();
    let mut tripped = None;
    for it in 1..=500 {
        match engine.iterate() {
            Ok(_) => {
                if engine.messages().values().flat_map(|m| m.values()).any(|&x| x == 0.0) {
                    return Err(format!("unscaled run, iteration {it}: silent zero"));
                }
            }
            Err(InferenceError::UnderflowDetected { .. }) => {
                tripped = Some(it);
                break;
            }
            Err(e) => return Err(format!("unscaled run, iteration {it}: {e}")),
        }
    }
    match tripped {
        Some(it) => Ok(format!(
            "500 rescaled iterations, smallest message entry {smallest:.3e}; unscaled run raises UnderflowDetected at iteration {it}"
        )),
        None => Err("unscaled run never raised UnderflowDetected".into()),
    }
}

fn rows(marginals: Vec<Vec<f64>>) -> Beliefs {
    Beliefs { kind: BeliefKind::Approximate, marginals, joint: None, normalizer: None }
}

fn criterion_11() -> Outcome {
    let mut failed = Vec::new();
    let mut expect = |ok: bool, what: &str| {
        if !ok {
            failed.push(what.to_string());
        }
    };
    let x = rows(vec![vec![0.3, 0.7], vec![0.2, 0.5, 0.3]]);
    let m = metrics(&x, &x).unwrap();
    expect(
        (m.nhd, m.abs_error, m.rel_error, m.kl, m.score) == (0.0, 0.0, 0.0, 0.0, 1.0),
        "identical beliefs give the zero report",
    );

    let m = metrics(&rows(vec![vec![0.5, 0.5]]), &rows(vec![vec![1.0, 0.0]])).unwrap();
    expect(m.abs_error == (0.5 + 0.5) / 2.0, "certain vs uniform: abs error");
    expect(m.kl == 2f64.ln() / 2.0, "certain vs uniform: KL");
    expect(m.rel_error == 0.5 && m.rel_skipped == 1, "certain vs uniform: rel error skips the zero");
    expect(m.nhd == 0.0, "certain vs uniform: argmax ties pick the lowest value");

    expect(ber(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap() == 0.0, "ber identical");
    expect(ber(&[0, 1, 1, 0], &[1, 0, 0, 1]).unwrap() == 1.0, "ber complement");
    expect(ber(&[0, 1, 1, 0], &[0, 1, 0, 1]).unwrap() == 0.5, "ber half");

    let same = interval_stats_pairs(&[(0.02, 0.02), (0.4, 0.4), (0.97, 0.97)], 10);
    expect(
        same.recall_abs_error.iter().chain(&same.precision_abs_error).all(|e| e.is_none() || *e == Some(0.0)),
        "equal pairs: zero interval error",
    );
    let one = interval_stats_pairs(&[(0.07, 0.02)], 10);
    let d = (0.07f64 - 0.02).abs();
    expect(one.recall_abs_error[0] == Some(d) && d == 0.07 - 0.02, "single pair recall in [0, 0.05)");
    expect(one.precision_abs_error[1] == Some(d), "single pair precision in [0.05, 0.1)");
    expect(one.exact_hist.iter().sum::<usize>() == 1 && one.approx_hist.iter().sum::<usize>() == 1, "histogram totals");

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let p: f64 = rng.random_range(0.001..0.999);
        let q: f64 = rng.random_range(0.001..0.999);
        let m = metrics(&rows(vec![vec![p, 1.0 - p]]), &rows(vec![vec![q, 1.0 - q]])).unwrap();
        if (m.score - 10f64.powf(-m.kl)).abs() > 1e-12 || (score(m.kl) - m.score).abs() > 1e-12 {
            expect(false, "score = 10^-KL");
            break;
        }
    }
    expect(score(f64::INFINITY) == 0.0, "infinite KL scores 0");
    if failed.is_empty() {
        Ok("closed-form metric, BER and interval examples reproduced; score = 10^-KL within 1e-12".into())
    } else {
        Err(failed.join("; "))
    }
}

fn criterion_12() -> Outcome {
    let mut graphs = 0;
    for j in 0..100u64 {
        for i in [2usize, 3, 5] {
            let fan_in = (1 + j as usize % 3).min(i - 1);
            let n = 6 + (j as usize * 5) % 20;
            let net = gen_random(n, 2, n - fan_in - j as usize % 2, fan_in, 60_000 + j).unwrap();
            let jg = join_graph_structuring(&net, i).map_err(|e| format!("net {j}, i={i}: {e}"))?;
            let r = validate_decomposition(&jg, net.cpts());
            if !r.is_valid() || !r.label_minimal || !r.per_variable_acyclic || jg.internal_width() > i {
                return Err(format!("net {j}, i={i}: {:?}", r));
            }
            graphs += 1;
        }
    }
    Ok(format!("{graphs} structured join graphs valid, width <= i, label-minimal, per-variable acyclic"))
}

fn marginals_dump(seed: u64) -> String {
    let mut out = String::new();
    for j in 0..20 {
        let (net, ev) = exactness_instance(seed + j);
        let t = tree(&net, OrderingHeuristic::MinFill);
        out += &write_marginals(&cte_bu(&net, &t, &ev).unwrap().marginals);
        out += &write_marginals(&mc(&net, &t, &ev, 2, McMode::Approx).marginals);
        let jg = join_graph_structuring_relaxed(&net, 2).unwrap();
        out += &write_marginals(&ijgp(&net, &jg, &ev, ConvergenceSpec::default()).unwrap().beliefs.marginals);
        out += &write_marginals(&ibp(&net, &ev, ConvergenceSpec::default()).unwrap().beliefs.marginals);
    }
    out
}

fn criterion_13() -> Outcome {
    let family = Family::Random { n: 20, k: 2, c: 16, p: 3 };
    let csv = || to_csv(&bench(6, family, 3, &[2, 4], 10, 7, false).unwrap());
    let coding = || to_csv(&bench(4, Family::Coding { n: 30, p: 3, sigma: 0.4 }, 0, &[2], 10, 9, false).unwrap());
    let (a, b) = (csv(), csv());
    let (c, d) = (coding(), coding());
    let (m1, m2) = (marginals_dump(70_000), marginals_dump(70_000));
    check(
        a == b && c == d && m1 == m2,
        format!("repeated CSV ({} + {} bytes) and marginals ({} bytes) byte-identical", a.len(), c.len(), m1.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 5] = [
        ("exactness of cte_bu", criterion_1),
        ("join-tree collapse of ijgp", criterion_2),
        ("polytree ibp", criterion_3),
        ("mini-cluster bounds", criterion_4),
        ("mean-mode normalization", criterion_5),
    ];
    let later: [(&str, fn() -> Outcome); 6] = [
        ("anytime trend", criterion_6),
        ("coding sanity", criterion_9),
        ("underflow guard", criterion_10),
        ("metric examples", criterion_11),
        ("structuring validity", criterion_12),
        ("determinism", criterion_13),
    ];
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let run = |id: usize, name: &'static str, f: &dyn Fn() -> Outcome, results: &mut Vec<_>| {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        print_line(id, name, &outcome, secs);
        results.push((id, name, outcome, secs));
    };
    for (k, (name, f)) in criteria.iter().enumerate() {
        run(k + 1, name, f, &mut results);
    }
    run(6, later[0].0, &later[0].1, &mut results);
    let start = Instant::now();
    let (seven, eight) = zero_suite();
    let secs = start.elapsed().as_secs_f64();
    print_line(7, "zero-belief soundness", &seven, secs);
    print_line(8, "arc-consistency termination", &eight, 0.0);
    results.push((7, "zero-belief soundness", seven, secs));
    results.push((8, "arc-consistency termination", eight, 0.0));
    for (k, (name, f)) in later.iter().enumerate().skip(1) {
        run(8 + k, name, f, &mut results);
    }
    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn print_line(id: usize, name: &str, outcome: &Outcome, secs: f64) {
    match outcome {
        Ok(detail) => println!("PASS {id:>2} {name}: {detail} [{secs:.1}s]"),
        Err(detail) => println!("FAIL {id:>2} {name}: {detail} [{secs:.1}s]"),
    }
}
