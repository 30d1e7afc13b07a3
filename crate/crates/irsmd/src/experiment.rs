//! Experiment harness: problem resolution, multi-sample-path orchestration,
//! gap traces, aggregation, and rate fitting.
//!
//! Path i runs with seed `base_seed + i`, so adding paths never changes the
//! outputs of existing ones. Gap columns are |f(x̄_k) − f*| and
//! |h(x̄_k) − h*|; the reference values f*, h* come from the reference module
//! when the problem is small enough, and otherwise fall back to the best
//! value observed across this experiment (recorded as such in the summary).

use crate::config::{Budget, InitialPoint, ProblemSelector, RunConfig, SetSelector};
use crate::data;
use crate::geometry::{DistanceGenerator, FeasibleSet};
use crate::oracles::{
    BilevelProblem, ElasticNetOracle, HingeOracle, LeastSquaresOracle, SampleSource,
};
use crate::reference;
use crate::solver::{self, RunReport, SolverOptions};
use crate::synth;
use crate::twostage;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Oracle(#[from] crate::oracles::OracleError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Solver(#[from] crate::solver::SolverError),
    #[error(transparent)]
    TwoStage(#[from] crate::twostage::TwoStageError),
    #[error(transparent)]
    Reference(#[from] crate::reference::ReferenceError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Where a reference value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StarKind {
    /// Certified by the reference module (cross-checked or grid-enumerated).
    Certified,
    /// Guaranteed by problem construction (e.g. separable synthetic data).
    Constructed,
    /// Best value observed across this experiment's paths.
    BestObserved,
}

impl StarKind {
    fn as_str(&self) -> &'static str {
        match self {
            StarKind::Certified => "certified",
            StarKind::Constructed => "constructed",
            StarKind::BestObserved => "best-observed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub k: u64,
    pub mean_f_gap: f64,
    pub se_f_gap: f64,
    pub mean_h_gap: f64,
    pub se_h_gap: f64,
    pub paths: usize,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub reports: Vec<Result<RunReport, String>>,
    pub aggregate: Vec<AggregateRow>,
    pub f_star: f64,
    pub h_star: f64,
    pub f_star_kind: StarKind,
    pub h_star_kind: StarKind,
    pub rate_fit: Option<(f64, f64)>,
    pub summary: Vec<(String, String)>,
    pub output_dir: PathBuf,
}

/// A problem built from a [`RunConfig`], keeping the compiled two-stage
/// form alive when there is one (it carries the exact feasible-grid oracle).
pub struct ResolvedProblem {
    pub problem: BilevelProblem,
    pub label: String,
    pub compiled_two_stage: Option<twostage::CompiledBilevel>,
}

/// Build the bilevel problem named by the config.
pub fn resolve_problem(cfg: &RunConfig) -> Result<ResolvedProblem, ExperimentError> {
    match &cfg.problem {
        ProblemSelector::TwoStage { file } => {
            let spec = twostage::load_two_stage_file(file)?;
            let compiled = twostage::compile(spec)?;
            let p = compiled.to_problem()?;
            Ok(ResolvedProblem {
                problem: p,
                label: format!("two-stage:{}", file.display()),
                compiled_two_stage: Some(compiled),
            })
        }
        other => {
            let (inner, label): (Arc<dyn crate::oracles::FirstOrderOracle>, String) = match other {
                ProblemSelector::LeastSquares { matrix, rhs } => {
                    let a = data::load_dense_matrix(matrix)?;
                    let b = data::load_vector(rhs)?;
                    (
                        Arc::new(LeastSquaresOracle::new(a, b)?),
                        format!("least-squares:{}", matrix.display()),
                    )
                }
                ProblemSelector::Hinge { data: path } => {
                    let examples = data::load_sparse_classification(path)?;
                    (
                        Arc::new(HingeOracle::new(examples)?),
                        format!("hinge:{}", path.display()),
                    )
                }
                ProblemSelector::SyntheticHinge { examples, features, sparsity, data_seed } => {
                    let d = synth::separable_sparse_data(*examples, *features, *sparsity, *data_seed);
                    (
                        Arc::new(HingeOracle::new(d)?),
                        format!("synthetic-hinge:{examples}x{features}"),
                    )
                }
                ProblemSelector::SyntheticLeastSquares { cols, rank } => {
                    let (a, b, _) = synth::rank_deficient_least_squares(*cols, (*rank).min(*cols));
                    (
                        Arc::new(LeastSquaresOracle::new(a, b)?),
                        format!("synthetic-least-squares:{cols}r{rank}"),
                    )
                }
                ProblemSelector::TwoStage { .. } => unreachable!(),
            };
            let dim = inner.dim();
            let set = build_set(&cfg.set, dim)?;
            let outer = Arc::new(ElasticNetOracle::new(cfg.mu_h, dim)?);
            Ok(ResolvedProblem {
                problem: BilevelProblem::new(inner, outer, set)?,
                label,
                compiled_two_stage: None,
            })
        }
    }
}

fn build_set(sel: &SetSelector, dim: usize) -> Result<FeasibleSet, ExperimentError> {
    Ok(match sel {
        SetSelector::WholeSpace => FeasibleSet::whole_space(dim),
        SetSelector::SymmetricBox { lower, upper } => FeasibleSet::symmetric_box(dim, *lower, *upper)?,
        SetSelector::Box { lower, upper } => {
            FeasibleSet::bounded_box(lower.clone(), upper.clone())?
        }
        SetSelector::Ball { center, radius } => {
            let c = center.clone().unwrap_or_else(|| vec![0.0; dim]);
            let c = if c.len() == 1 && dim > 1 { vec![c[0]; dim] } else { c };
            FeasibleSet::ball(c, *radius)?
        }
    })
}

fn initial_point(x0: &InitialPoint, dim: usize) -> Result<Vec<f64>, ExperimentError> {
    Ok(match x0 {
        InitialPoint::Zero => vec![0.0; dim],
        InitialPoint::Constant(c) => vec![*c; dim],
        InitialPoint::File(path) => {
            let v = data::load_vector(path)?;
            if v.len() != dim {
                return Err(ExperimentError::Invalid(format!(
                    "x0 file has length {}, problem dimension is {dim}",
                    v.len()
                )));
            }
            v
        }
    })
}

/// Work budget the reference module may spend per star (support size times
/// dimension per subgradient pass).
const REFERENCE_COST_LIMIT: usize = 2_000_000;

type Star = Option<(f64, StarKind)>;

fn reference_stars(resolved: &ResolvedProblem, cfg: &RunConfig) -> (Star, Star) {
    let p = &resolved.problem;
    let support = p.inner().scenario_count();
    let pass_cost = support.saturating_mul(p.dim());

    let f_star = if matches!(cfg.problem, ProblemSelector::SyntheticHinge { .. }) {
        // Separable by construction: hinge optimum is exactly 0.
        Some((0.0, StarKind::Constructed))
    } else if matches!(cfg.problem, ProblemSelector::TwoStage { .. }) {
        // Penalty encoding: E[F] vanishes on the feasible region (assumes
        // relatively complete recourse).
        Some((0.0, StarKind::Constructed))
    } else if pass_cost <= REFERENCE_COST_LIMIT {
        reference::solve_inner(p, 200_000, 1e-9)
            .ok()
            .map(|s| (s.objective, StarKind::Certified))
    } else {
        None
    };

    // For a compiled two-stage problem the feasible-grid enumerator is exact
    // on the original constraints; otherwise fall back to the generic
    // near-optimal-slab enumeration.
    let h_star = if let Some(compiled) = resolved
        .compiled_two_stage
        .as_ref()
        .filter(|c| c.stacked_dim() <= 4)
    {
        compiled
            .grid_minimum(0.01, 1e-9)
            .ok()
            .map(|(_, h)| (h, StarKind::Certified))
    } else if p.dim() <= 3 && p.set().is_compact() {
        let resolution = if p.dim() <= 2 { 0.01 } else { 0.02 };
        reference::solve_bilevel_bruteforce(p, resolution)
            .ok()
            .map(|s| (s.h_star, StarKind::Certified))
    } else {
        None
    };
    (f_star, h_star)
}

/// Execute the configured experiment: run all sample paths, write per-path
/// trace CSVs, the aggregate CSV, plot data, and the summary file.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutcome, ExperimentError> {
    let resolved = resolve_problem(cfg)?;
    let label = resolved.label.clone();
    let problem = resolved.problem.clone();
    let dgf = DistanceGenerator::euclidean();
    let dim = problem.dim();
    let x0 = initial_point(&cfg.x0, dim)?;

    // Refuse invalid schedules up front (run() would too, but the config
    // contract is to fail before spawning workers).
    if !cfg.override_validation {
        if !cfg.schedule.initial_product_ok(dgf.grad_lipschitz(), problem.mu_h()) {
            return Err(ExperimentError::Invalid(format!(
                "gamma0*lambda0 = {} exceeds L_omega/mu_h = {}; pass override_validation to run anyway",
                cfg.schedule.gamma0() * cfg.schedule.lambda0(),
                dgf.grad_lipschitz() / problem.mu_h()
            )));
        }
        if !cfg.schedule.convergence_report().passed {
            return Err(ExperimentError::Invalid(
                "schedule fails validation; pass override_validation to run anyway".into(),
            ));
        }
    }

    let (n, wall) = match cfg.budget {
        Budget::Iterations(n) => (n, None),
        Budget::WallClockSeconds(s) => (u64::MAX / 2, Some(Duration::from_secs_f64(s))),
    };
    let opts = SolverOptions {
        override_validation: cfg.override_validation,
        eval_exact_at_checkpoints: cfg.eval_exact,
        wall_clock_budget: wall,
        ..Default::default()
    };

    // Worker pool over path indices; results keyed by index so aggregation
    // is independent of scheduling.
    let paths = cfg.paths;
    let threads = if cfg.threads == 0 {
        std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1)
    } else {
        cfg.threads
    }
    .min(paths)
    .max(1);
    let mut reports: Vec<Option<Result<RunReport, String>>> = (0..paths).map(|_| None).collect();
    {
        let (tx, rx) = mpsc::channel();
        let counter = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..threads {
                let tx = tx.clone();
                let counter = &counter;
                let problem = &problem;
                let opts = &opts;
                let cfg = &cfg;
                let x0 = &x0;
                let dgf = &dgf;
                scope.spawn(move || loop {
                    let i = counter.fetch_add(1, Ordering::Relaxed);
                    if i >= paths {
                        break;
                    }
                    let mut src = SampleSource::from_seed(cfg.seed + i as u64);
                    let result =
                        solver::run(problem, dgf, &cfg.schedule, x0, n, &mut src, opts)
                            .map_err(|e| e.to_string());
                    if tx.send((i, result)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            for (i, result) in rx {
                reports[i] = Some(result);
            }
        });
    }
    let reports: Vec<Result<RunReport, String>> =
        reports.into_iter().map(|r| r.expect("worker sent result")).collect();

    let (f_ref, h_ref) = reference_stars(&resolved, cfg);
    let best_observed = |pick: fn(&crate::solver::TraceRow) -> Option<f64>| -> f64 {
        reports
            .iter()
            .flatten()
            .flat_map(|r| r.trace.iter().filter_map(pick))
            .fold(f64::INFINITY, f64::min)
    };
    let (f_star, f_star_kind) = f_ref.unwrap_or_else(|| {
        (best_observed(|row| row.f_value).min(f64::INFINITY), StarKind::BestObserved)
    });
    let (h_star, h_star_kind) = h_ref.unwrap_or_else(|| {
        (best_observed(|row| row.h_value), StarKind::BestObserved)
    });
    let f_star = if f_star.is_finite() { f_star } else { 0.0 };
    let h_star = if h_star.is_finite() { h_star } else { 0.0 };

    std::fs::create_dir_all(&cfg.output_dir)?;
    for (i, rep) in reports.iter().enumerate() {
        if let Ok(rep) = rep {
            let path = cfg.output_dir.join(format!("path-{i:03}.csv"));
            std::fs::write(&path, trace_to_csv(rep, f_star, h_star))?;
        }
    }

    let aggregate = aggregate_rows(&reports, f_star, h_star);
    let mut agg_csv = String::from("k,mean_f_gap,se_f_gap,mean_h_gap,se_h_gap,paths\n");
    for row in &aggregate {
        agg_csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.k, row.mean_f_gap, row.se_f_gap, row.mean_h_gap, row.se_h_gap, row.paths
        ));
    }
    std::fs::write(cfg.output_dir.join("aggregate.csv"), &agg_csv)?;

    // Two-column plot data, one file per gap.
    let mut plot_f = String::new();
    let mut plot_h = String::new();
    for row in &aggregate {
        plot_f.push_str(&format!("{} {}\n", row.k, row.mean_f_gap));
        plot_h.push_str(&format!("{} {}\n", row.k, row.mean_h_gap));
    }
    std::fs::write(cfg.output_dir.join("plot_f.dat"), plot_f)?;
    std::fs::write(cfg.output_dir.join("plot_h.dat"), plot_h)?;

    let fit_points: Vec<(f64, f64)> = aggregate
        .iter()
        .map(|r| (r.k as f64, r.mean_f_gap))
        .collect();
    let rate_fit = rate_fit(&fit_points).ok();

    let mut summary: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| summary.push((k.to_string(), v));
    put("problem", label);
    put("dimension", dim.to_string());
    put("mu_h", problem.mu_h().to_string());
    put("gamma0", cfg.schedule.gamma0().to_string());
    put("lambda0", cfg.schedule.lambda0().to_string());
    put("a", cfg.schedule.exponent_a().to_string());
    put("b", cfg.schedule.exponent_b().to_string());
    put("r", cfg.schedule.averaging_exponent().to_string());
    put("schedule_valid", cfg.schedule.convergence_report().passed.to_string());
    put("paths", paths.to_string());
    put("base_seed", cfg.seed.to_string());
    put("threads", threads.to_string());
    match cfg.budget {
        Budget::Iterations(n) => put("iterations", n.to_string()),
        Budget::WallClockSeconds(s) => put("wall_clock_seconds", s.to_string()),
    }
    put("f_star", f_star.to_string());
    put("f_star_kind", f_star_kind.as_str().to_string());
    put("h_star", h_star.to_string());
    put("h_star_kind", h_star_kind.as_str().to_string());
    let failures: Vec<String> = reports
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().err().map(|e| format!("path {i}: {e}")))
        .collect();
    put("failed_paths", failures.len().to_string());
    for f in &failures {
        put("failure", f.clone());
    }
    if let Some((slope, intercept)) = rate_fit {
        put("f_gap_fit_slope", slope.to_string());
        put("f_gap_fit_intercept", intercept.to_string());
    }
    if let Some(last) = aggregate.last() {
        put("final_mean_f_gap", last.mean_f_gap.to_string());
        put("final_mean_h_gap", last.mean_h_gap.to_string());
    }
    let mut summary_text = String::new();
    for (k, v) in &summary {
        summary_text.push_str(&format!("{k} = {v}\n"));
    }
    std::fs::write(cfg.output_dir.join("summary.txt"), summary_text)?;

    Ok(ExperimentOutcome {
        reports,
        aggregate,
        f_star,
        h_star,
        f_star_kind,
        h_star_kind,
        rate_fit,
        summary,
        output_dir: cfg.output_dir.clone(),
    })
}

/// Serialize one path trace with the stable schema
/// `k,gamma,lambda,f_gap,h_gap,elapsed_ms`.
pub fn trace_to_csv(report: &RunReport, f_star: f64, h_star: f64) -> String {
    let mut out = String::from("k,gamma,lambda,f_gap,h_gap,elapsed_ms\n");
    for row in &report.trace {
        let f_gap = row.f_value.map(|v| (v - f_star).abs());
        let h_gap = row.h_value.map(|v| (v - h_star).abs());
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.k,
            row.gamma,
            row.lambda,
            f_gap.map_or(String::new(), |v| v.to_string()),
            h_gap.map_or(String::new(), |v| v.to_string()),
            row.elapsed_ms
        ));
    }
    out
}

/// Parse a trace CSV back into (k, gamma, lambda, f_gap, h_gap, elapsed_ms)
/// tuples.
#[allow(clippy::type_complexity)]
pub fn parse_trace_csv(
    text: &str,
) -> Result<Vec<(u64, f64, f64, Option<f64>, Option<f64>, f64)>, ExperimentError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != "k,gamma,lambda,f_gap,h_gap,elapsed_ms" {
        return Err(ExperimentError::Invalid(format!("unexpected trace header: {header}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(ExperimentError::Invalid(format!("trace line {} malformed", i + 2)));
        }
        let opt = |s: &str| -> Result<Option<f64>, ExperimentError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|_| ExperimentError::Invalid(format!("bad number: {s}")))
            }
        };
        rows.push((
            parts[0]
                .parse::<u64>()
                .map_err(|_| ExperimentError::Invalid(format!("bad k: {}", parts[0])))?,
            opt(parts[1])?.ok_or_else(|| ExperimentError::Invalid("missing gamma".into()))?,
            opt(parts[2])?.ok_or_else(|| ExperimentError::Invalid("missing lambda".into()))?,
            opt(parts[3])?,
            opt(parts[4])?,
            opt(parts[5])?.ok_or_else(|| ExperimentError::Invalid("missing elapsed".into()))?,
        ));
    }
    Ok(rows)
}

fn aggregate_rows(
    reports: &[Result<RunReport, String>],
    f_star: f64,
    h_star: f64,
) -> Vec<AggregateRow> {
    let ok: Vec<&RunReport> = reports.iter().flatten().collect();
    if ok.is_empty() {
        return Vec::new();
    }
    // Checkpoints shared by every successful path, in order.
    let mut common: Vec<u64> = ok[0].trace.iter().map(|r| r.k).collect();
    for rep in &ok[1..] {
        let ks: std::collections::HashSet<u64> = rep.trace.iter().map(|r| r.k).collect();
        common.retain(|k| ks.contains(k));
    }
    let mut rows = Vec::with_capacity(common.len());
    for k in common {
        let mut f_gaps = Vec::new();
        let mut h_gaps = Vec::new();
        for rep in &ok {
            let row = rep.trace.iter().find(|r| r.k == k).unwrap();
            if let Some(v) = row.f_value {
                f_gaps.push((v - f_star).abs());
            }
            if let Some(v) = row.h_value {
                h_gaps.push((v - h_star).abs());
            }
        }
        let (mf, sf) = mean_se(&f_gaps);
        let (mh, sh) = mean_se(&h_gaps);
        rows.push(AggregateRow {
            k,
            mean_f_gap: mf,
            se_f_gap: sf,
            mean_h_gap: mh,
            se_h_gap: sh,
            paths: ok.len(),
        });
    }
    rows
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares fit of log(gap) against log(k) over the tail half of the
/// positive-gap checkpoints. Returns (slope, intercept); needs at least four
/// usable points.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<(f64, f64), ExperimentError> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(k, g)| *k > 0.0 && *g > 0.0 && g.is_finite())
        .map(|&(k, g)| (k.ln(), g.ln()))
        .collect();
    if usable.len() < 4 {
        return Err(ExperimentError::Invalid(format!(
            "rate fit needs at least 4 positive-gap checkpoints, have {}",
            usable.len()
        )));
    }
    let tail = &usable[usable.len() / 2..];
    let n = tail.len() as f64;
    let sx: f64 = tail.iter().map(|(x, _)| x).sum();
    let sy: f64 = tail.iter().map(|(_, y)| y).sum();
    let sxx: f64 = tail.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = tail.iter().map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Err(ExperimentError::Invalid("degenerate abscissae in rate fit".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    Ok((slope, intercept))
}

/// Fit from an aggregate CSV produced by [`run_experiment`]; `column` is
/// "f" or "h".
pub fn rate_fit_from_aggregate(path: &Path, column: &str) -> Result<(f64, f64), ExperimentError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if !header.starts_with("k,mean_f_gap") {
        return Err(ExperimentError::Invalid(format!("unexpected aggregate header: {header}")));
    }
    let idx = match column {
        "f" => 1,
        "h" => 3,
        other => {
            return Err(ExperimentError::Invalid(format!("column must be f or h, got {other}")));
        }
    };
    let mut points = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let k: f64 = parts[0].parse().map_err(|_| {
            ExperimentError::Invalid(format!("bad k in aggregate: {}", parts[0]))
        })?;
        let g: f64 = parts[idx].parse().unwrap_or(f64::NAN);
        points.push((k, g));
    }
    rate_fit(&points)
}

/// Write a schedule validation report as plain text, one line per condition.
pub fn write_validation_report(
    schedule: &crate::schedules::Schedule,
    out: &mut dyn Write,
) -> std::io::Result<()> {
    let conv = schedule.convergence_report();
    writeln!(out, "convergence conditions: {}", verdict(conv.passed))?;
    for c in &conv.conditions {
        writeln!(out, "  [{}] {}", verdict(c.passed), c.condition)?;
    }
    let diag = schedule.bound_diagnostic_report();
    writeln!(out, "recursive-bound conditions: {}", verdict(diag.passed))?;
    for c in &diag.conditions {
        writeln!(out, "  [{}] {}", verdict(c.passed), c.condition)?;
    }
    Ok(())
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}
