//! Command-line front end. [`run`] returns the process exit code: 0 on
//! success, 1 for usage and input errors, 2 when a computation fails and 3
//! when the zero-belief audit finds a violation.
//!
//! i-bounds below the widest CPT are accepted: such a CPT gets a
//! mini-cluster of its own.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::benchgen::{generate, sample_evidence, Family, GeneratorSpec};
use crate::decomposition::{
    build_join_tree, elimination_order, join_graph_structuring_relaxed, validate_decomposition, validate_with_bound,
    OrderingHeuristic, TreeDecomposition, ValidationReport,
};
use crate::eval::{ber, decode, exact_marginals, metrics_over, to_csv, CsvRow, MetricsReport};
use crate::factor::VarId;
use crate::flat::{zero_belief_audit, AuditError};
use crate::inference::{cte_bu, ibp, ijgp, BeliefKind, ClusterTreeEngine, Beliefs, ConvergenceSpec, McMode};
use crate::io::{
    parse_evidence_for, parse_marginals, parse_network, parse_truth, write_evidence, write_network, write_truth,
};
use crate::model::{moral_graph, BayesianNetwork, Evidence};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Compute(String),
    #[error("{0}")]
    Soundness(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Compute(_) => 2,
            CliError::Soundness(_) => 3,
        }
    }
}

fn compute(e: impl ToString) -> CliError {
    CliError::Compute(e.to_string())
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "ijgp", version, about = "Exact and bounded belief updating over Bayesian networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    Cte,
    Mc,
    Ijgp,
    Ibp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Upper,
    Lower,
    Approx,
    Sum,
}

impl From<Mode> for McMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Upper => McMode::Upper,
            Mode::Lower => McMode::Lower,
            Mode::Approx => McMode::Approx,
            Mode::Sum => McMode::Sum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyName {
    Random,
    Grid,
    Noisyor,
    Coding,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute posterior marginals.
    Solve {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        evidence: Option<PathBuf>,
        #[arg(long, value_enum)]
        alg: Algorithm,
        #[arg(long)]
        ibound: Option<usize>,
        #[arg(long, default_value_t = 30)]
        iters: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, value_enum, default_value = "approx")]
        mode: Mode,
        /// Marginals file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-iteration marginals (ijgp and ibp only).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Generate a benchmark network; writes PREFIX.net, PREFIX.evid and,
    /// for coding networks, PREFIX.truth.
    Gen {
        #[arg(long, value_enum)]
        family: FamilyName,
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Grid side length.
        #[arg(long, default_value_t = 5)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Number of variables given parents (random family).
        #[arg(long)]
        c: Option<usize>,
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long, default_value_t = 0.3)]
        sigma: f64,
        #[arg(long, default_value_t = 0.0)]
        leak: f64,
        #[arg(long, default_value_t = 0.2)]
        inhibition_max: f64,
        /// Number of forward-sampled observed variables (not for coding).
        #[arg(long, default_value_t = 0)]
        evidence_count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a join-graph (with --ibound) or a min-fill join tree.
    Decompose {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        ibound: Option<usize>,
        /// Validate and print the report instead of the decomposition.
        #[arg(long)]
        check: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a marginals file against exact marginals.
    Eval {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        evidence: Option<PathBuf>,
        #[arg(long)]
        approx: PathBuf,
        /// Transmitted bits; reports the bit error rate of the first
        /// variables.
        #[arg(long)]
        truth_bits: Option<PathBuf>,
        #[arg(long, default_value = "approx")]
        algorithm: String,
        #[arg(long)]
        ibound: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Measured solve time to record; left at 0 otherwise so reports
        /// are reproducible.
        #[arg(long, default_value_t = 0.0)]
        wall_time: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check IJGP zero beliefs against relational arc-consistency.
    Audit {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        evidence: Option<PathBuf>,
        #[arg(long)]
        ibound: usize,
        #[arg(long, default_value_t = 30)]
        iters: usize,
    },
    /// Run MC, IJGP and IBP on a suite of random networks and write a CSV
    /// report against exact marginals.
    Bench {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 30)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long)]
        c: Option<usize>,
        #[arg(long, default_value_t = 3)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        evidence_count: usize,
        #[arg(long, value_delimiter = ',', default_value = "2,4")]
        ibounds: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Record wall-clock times (makes the report non-reproducible).
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parse `args` (program name first) and execute; messages go to standard
/// output and standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_to(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_to(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_net(path: &Path) -> Result<BayesianNetwork, CliError> {
    parse_network(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_evidence(path: Option<&Path>, net: &BayesianNetwork) -> Result<Evidence, CliError> {
    match path {
        Some(p) => parse_evidence_for(&read(p)?, net).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => Ok(Evidence::empty()),
    }
}

fn min_fill_tree(net: &BayesianNetwork) -> Result<TreeDecomposition, CliError> {
    let (order, _) = elimination_order(&moral_graph(net), OrderingHeuristic::MinFill);
    build_join_tree(net, &order).map_err(compute)
}

fn relaxed_mc(
    net: &BayesianNetwork,
    tree: &TreeDecomposition,
    ev: &Evidence,
    i: usize,
    mode: McMode,
) -> Result<Beliefs, CliError> {
    let run = ClusterTreeEngine::mini_cluster(net, tree, ev, i, mode).allow_oversize().run().map_err(compute)?;
    Ok(run.beliefs)
}

fn need_ibound(ibound: Option<usize>, alg: &str) -> Result<usize, CliError> {
    ibound.ok_or_else(|| usage(format!("--ibound is required for {alg}")))
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Solve { net, evidence, alg, ibound, iters, tol, mode, out, trace } => {
            let net = load_net(&net)?;
            let ev = load_evidence(evidence.as_deref(), &net)?;
            let spec = ConvergenceSpec { max_iterations: iters, tolerance: tol, rescale: true };
            let (beliefs, trace_text) = match alg {
                Algorithm::Cte => (cte_bu(&net, &min_fill_tree(&net)?, &ev).map_err(compute)?, None),
                Algorithm::Mc => {
                    let i = need_ibound(ibound, "mc")?;
                    (relaxed_mc(&net, &min_fill_tree(&net)?, &ev, i, mode.into())?, None)
                }
                Algorithm::Ijgp => {
                    let i = need_ibound(ibound, "ijgp")?;
                    let jg = join_graph_structuring_relaxed(&net, i).map_err(compute)?;
                    let r = ijgp(&net, &jg, &ev, spec).map_err(compute)?;
                    let t = r.trace_text();
                    (r.beliefs, Some(t))
                }
                Algorithm::Ibp => {
                    let r = ibp(&net, &ev, spec).map_err(compute)?;
                    let t = r.trace_text();
                    (r.beliefs, Some(t))
                }
            };
            if let Some(path) = trace {
                let t = trace_text.ok_or_else(|| usage("--trace applies to ijgp and ibp"))?;
                write_to(&path, &t)?;
            }
            emit(out.as_deref(), &beliefs.to_text())
        }
        Command::Gen {
            family, n, m, k, c, p, sigma, leak, inhibition_max, evidence_count, seed, out,
        } => {
            let family = match family {
                FamilyName::Random => Family::Random { n, k, c: c.unwrap_or(n.saturating_sub(p)), p },
                FamilyName::Grid => Family::Grid { m, k },
                FamilyName::Noisyor => Family::NoisyOr { n, p, leak, inhibition: (0.0, inhibition_max) },
                FamilyName::Coding => Family::Coding { n, p, sigma },
            };
            let inst = generate(&GeneratorSpec { family, seed }).map_err(usage)?;
            let evidence = if inst.truth.is_some() {
                inst.evidence.clone()
            } else {
                sample_evidence(&inst.net, evidence_count, seed).map_err(usage)?
            };
            let prefix = out.display().to_string();
            write_to(Path::new(&format!("{prefix}.net")), &write_network(&inst.net))?;
            write_to(Path::new(&format!("{prefix}.evid")), &write_evidence(&evidence))?;
            if let Some(bits) = &inst.truth {
                write_to(Path::new(&format!("{prefix}.truth")), &write_truth(bits))?;
            }
            Ok(())
        }
        Command::Decompose { net, ibound, check, out } => {
            let net = load_net(&net)?;
            let (jg, text) = match ibound {
                Some(i) => {
                    let jg = join_graph_structuring_relaxed(&net, i).map_err(compute)?;
                    let text = jg.to_text();
                    (jg, text)
                }
                None => {
                    let tree = min_fill_tree(&net)?;
                    (tree.to_join_graph(), tree.to_text())
                }
            };
            if !check {
                return emit(out.as_deref(), &text);
            }
            let bound = ibound.unwrap_or(usize::MAX);
            let report = if ibound.is_some() {
                validate_with_bound(&jg, net.cpts(), bound)
            } else {
                validate_decomposition(&jg, net.cpts())
            };
            emit(out.as_deref(), &report_text(&report))?;
            if report.is_valid() {
                Ok(())
            } else {
                Err(compute(format!("{} violation(s)", report.violations.len())))
            }
        }
        Command::Eval {
            net, evidence, approx, truth_bits, algorithm, ibound, iterations, wall_time, out,
        } => {
            let instance = net.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let net = load_net(&net)?;
            let ev = load_evidence(evidence.as_deref(), &net)?;
            let rows = parse_marginals(&read(&approx)?).map_err(|e| usage(format!("{}: {e}", approx.display())))?;
            let approx = Beliefs { kind: BeliefKind::Approximate, marginals: rows, joint: None, normalizer: None };
            let exact = exact_marginals(&net, &ev).map_err(compute)?;
            let vars = free_vars(&net, &ev);
            let mut report = metrics_over(&approx, &exact, &vars).map_err(compute)?;
            report.wall_time_s = wall_time;
            let row = CsvRow { instance, algorithm, ibound, iterations, evidence: ev.len(), report };
            emit(out.as_deref(), &to_csv(&[row]))?;
            if let Some(path) = truth_bits {
                let truth = parse_truth(&read(&path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                let bits: Vec<VarId> = (0..truth.len()).collect();
                let rate = ber(&decode(&approx, &bits), &truth).map_err(compute)?;
                println!("ber {rate:e}");
            }
            Ok(())
        }
        Command::Audit { net, evidence, ibound, iters } => {
            let net = load_net(&net)?;
            let ev = load_evidence(evidence.as_deref(), &net)?;
            let jg = join_graph_structuring_relaxed(&net, ibound).map_err(compute)?;
            match zero_belief_audit(&net, &jg, &ev, ConvergenceSpec::iterations(iters)) {
                Ok(report) => {
                    print!("{report}");
                    Ok(())
                }
                Err(AuditError::SoundnessViolation(report)) => {
                    print!("{report}");
                    Err(CliError::Soundness("zero-belief soundness violated".into()))
                }
                Err(e) => Err(compute(e)),
            }
        }
        Command::Bench { count, n, k, c, p, evidence_count, ibounds, iters, seed, timing, out } => {
            let c = c.unwrap_or(n.saturating_sub(p));
            let rows = bench(count, Family::Random { n, k, c, p }, evidence_count, &ibounds, iters, seed, timing)?;
            emit(out.as_deref(), &to_csv(&rows))
        }
    }
}

fn free_vars(net: &BayesianNetwork, ev: &Evidence) -> Vec<VarId> {
    (0..net.num_variables()).filter(|&v| !ev.contains(v)).collect()
}

fn report_text(r: &ValidationReport) -> String {
    let mut out = format!(
        "valid {}\ninternal_width {}\nexternal_width {}\n",
        r.is_valid(),
        r.internal_width,
        r.external_width
    );
    if let Some(w) = r.treewidth {
        out.push_str(&format!("treewidth {w}\n"));
    }
    out.push_str(&format!("label_minimal {}\nper_variable_acyclic {}\n", r.label_minimal, r.per_variable_acyclic));
    for v in &r.violations {
        out.push_str(&format!("violation {v:?}\n"));
    }
    out
}

/// Instance `j` uses seed `seed + j`.
pub fn bench(
    count: usize,
    family: Family,
    evidence_count: usize,
    ibounds: &[usize],
    iters: usize,
    seed: u64,
    timing: bool,
) -> Result<Vec<CsvRow>, CliError> {
    let mut rows = Vec::new();
    for j in 0..count {
        let s = seed.wrapping_add(j as u64);
        let inst = generate(&GeneratorSpec { family, seed: s }).map_err(usage)?;
        let net = &inst.net;
        let ev = if inst.truth.is_some() {
            inst.evidence.clone()
        } else {
            sample_evidence(net, evidence_count, s).map_err(usage)?
        };
        let exact = exact_marginals(net, &ev).map_err(compute)?;
        let vars = free_vars(net, &ev);
        let tree = min_fill_tree(net)?;
        let spec = ConvergenceSpec::iterations(iters);
        let mut push = |algorithm: &str, ibound, iterations, f: &mut dyn FnMut() -> Result<Beliefs, CliError>| {
            let start = std::time::Instant::now();
            let b = f()?;
            let elapsed = start.elapsed().as_secs_f64();
            let report = MetricsReport {
                wall_time_s: if timing { elapsed } else { 0.0 },
                ..metrics_over(&b, &exact, &vars).map_err(compute)?
            };
            rows.push(CsvRow {
                instance: format!("{j}"),
                algorithm: algorithm.into(),
                ibound,
                iterations,
                evidence: ev.len(),
                report,
            });
            Ok::<(), CliError>(())
        };
        for &i in ibounds {
            push("mc", Some(i), None, &mut || relaxed_mc(net, &tree, &ev, i, McMode::Approx))?;
            push("ijgp", Some(i), Some(iters), &mut || {
                let jg = join_graph_structuring_relaxed(net, i).map_err(compute)?;
                Ok(ijgp(net, &jg, &ev, spec).map_err(compute)?.beliefs)
            })?;
        }
        push("ibp", None, Some(iters), &mut || Ok(ibp(net, &ev, spec).map_err(compute)?.beliefs))?;
    }
    Ok(rows)
}
