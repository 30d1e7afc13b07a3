//! The iterative regularized stochastic mirror descent loop.
//!
//! One step at iteration k draws two independent scenarios ξ_k, ξ̃_k, forms
//! the regularized direction γ_k (g_F(x_k, ξ_k) + λ_k g_H(x_k, ξ̃_k)), applies
//! the prox mapping over the feasible set, and then folds the new iterate
//! into the weighted average via
//!
//! ```text
//! S_{k+1} = S_k + γ_{k+1}^r,    x̄_{k+1} = (S_k x̄_k + γ_{k+1}^r x_{k+1}) / S_{k+1}
//! ```
//!
//! which keeps averaging O(n) per step. The average after k steps equals the
//! direct weighted sum Σ_t η_{t,k} x_t with η_{t,k} = γ_t^r / Σ_i γ_i^r over
//! t = 0..k; [`closed_form_average`] computes that sum directly for
//! cross-checking.

use crate::geometry::DistanceGenerator;
use crate::linalg::KahanSum;
use crate::oracles::{BilevelProblem, SampleSource};
use crate::schedules::Schedule;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("schedule fails validation and no override was given: {0}")]
    ScheduleRejected(String),
    #[error("initial product gamma0*lambda0 = {product} exceeds L_omega/mu_h = {limit}")]
    InitialProductTooLarge { product: f64, limit: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("iteration budget must be at least 1")]
    EmptyBudget,
}

/// Trace checkpoint cadence. `Geometric` records k = 1, 2, 4, 8, … plus the
/// final iteration, keeping traces O(log N).
#[derive(Debug, Clone, PartialEq)]
pub enum CheckpointPolicy {
    Geometric,
    EveryK(u64),
    Explicit(Vec<u64>),
    None,
}

impl CheckpointPolicy {
    fn is_checkpoint(&self, k: u64) -> bool {
        match self {
            CheckpointPolicy::Geometric => k.is_power_of_two(),
            CheckpointPolicy::EveryK(step) => *step > 0 && k.is_multiple_of(*step),
            CheckpointPolicy::Explicit(ks) => ks.contains(&k),
            CheckpointPolicy::None => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Run even when the schedule fails validation or the initial product
    /// check; the violation is recorded as a warning.
    pub override_validation: bool,
    /// Keep the full iterate history (test support; memory O(N·n)).
    pub capture_history: bool,
    /// Evaluate exact f/h at checkpoints (full support pass per evaluation).
    pub eval_exact_at_checkpoints: bool,
    pub checkpoints: CheckpointPolicy,
    /// Stop after this much wall time (plus at most one iteration).
    pub wall_clock_budget: Option<Duration>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            override_validation: false,
            capture_history: false,
            eval_exact_at_checkpoints: true,
            checkpoints: CheckpointPolicy::Geometric,
            wall_clock_budget: None,
        }
    }
}

/// Running state of one sample path.
#[derive(Debug, Clone)]
pub struct SolverState {
    k: u64,
    x: Vec<f64>,
    average: WeightedAverage,
    sample_count: u64,
    warnings: Vec<String>,
    // scratch buffers so a step allocates nothing
    g_f: Vec<f64>,
    g_h: Vec<f64>,
    direction: Vec<f64>,
    x_next: Vec<f64>,
}

impl SolverState {
    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn iterate(&self) -> &[f64] {
        &self.x
    }

    pub fn average(&self) -> &[f64] {
        self.average.value()
    }

    /// S_k = Σ_{t=0..k} γ_t^r.
    pub fn weight_sum(&self) -> f64 {
        self.average.weight_sum()
    }

    /// Scenario draws consumed so far (2 per step in sampling mode, 0 in
    /// deterministic mode).
    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

/// The averaging recursion S_{k+1} = S_k + w_{k+1},
/// x̄_{k+1} = (S_k x̄_k + w_{k+1} x_{k+1})/S_{k+1}, with compensated weight
/// accumulation so the closed-form equivalence stays tight over long runs.
#[derive(Debug, Clone)]
pub struct WeightedAverage {
    mean: Vec<f64>,
    weight_sum: KahanSum,
}

impl WeightedAverage {
    pub fn new(x0: &[f64], w0: f64) -> Self {
        Self { mean: x0.to_vec(), weight_sum: KahanSum::new(w0) }
    }

    pub fn push(&mut self, w: f64, x: &[f64]) {
        let s_prev = self.weight_sum.value();
        self.weight_sum.add(w);
        let s_next = self.weight_sum.value();
        for (m, &v) in self.mean.iter_mut().zip(x) {
            *m = (s_prev * *m + w * v) / s_next;
        }
    }

    pub fn value(&self) -> &[f64] {
        &self.mean
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight_sum.value()
    }
}

/// One row of the run trace, captured at checkpoint iteration `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: u64,
    pub gamma: f64,
    pub lambda: f64,
    /// exact_f(x̄_k), when checkpoint evaluation is enabled.
    pub f_value: Option<f64>,
    pub h_value: Option<f64>,
    pub elapsed_ms: f64,
}

/// Outcome of [`run`]: the final weighted average plus the checkpoint trace.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub final_average: Vec<f64>,
    pub final_iterate: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub iterations: u64,
    pub seed: u64,
    pub gamma0: f64,
    pub lambda0: f64,
    pub exponent_a: f64,
    pub exponent_b: f64,
    pub averaging_exponent: f64,
    pub warnings: Vec<String>,
    /// Full iterate history (only with `capture_history`).
    pub history: Option<Vec<Vec<f64>>>,
}

impl RunReport {
    /// Numeric payload for determinism comparisons: everything except wall
    /// clock timings.
    pub fn numeric_eq(&self, other: &RunReport) -> bool {
        self.final_average == other.final_average
            && self.final_iterate == other.final_iterate
            && self.iterations == other.iterations
            && self.trace.len() == other.trace.len()
            && self
                .trace
                .iter()
                .zip(&other.trace)
                .all(|(a, b)| {
                    a.k == b.k
                        && a.gamma == b.gamma
                        && a.lambda == b.lambda
                        && a.f_value == b.f_value
                        && a.h_value == b.h_value
                })
    }
}

/// Set up a solver state at x₀.
///
/// x₀ is projected onto the feasible set if it lies outside (with a recorded
/// warning). Fails when the schedule does not pass the convergence validator
/// or the initial product check, unless `override_validation` is set.
pub fn init(
    x0: &[f64],
    problem: &BilevelProblem,
    dgf: &DistanceGenerator,
    schedule: &Schedule,
    opts: &SolverOptions,
) -> Result<SolverState, SolverError> {
    if x0.len() != problem.dim() {
        return Err(SolverError::DimensionMismatch { expected: problem.dim(), got: x0.len() });
    }
    let mut warnings = Vec::new();

    let report = schedule.convergence_report();
    if !report.passed {
        let failed: Vec<&str> = report
            .conditions
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.condition.as_str())
            .collect();
        if opts.override_validation {
            warnings.push(format!("schedule validation overridden; failed: {}", failed.join("; ")));
        } else {
            return Err(SolverError::ScheduleRejected(failed.join("; ")));
        }
    }
    if !schedule.initial_product_ok(dgf.grad_lipschitz(), problem.mu_h()) {
        let product = schedule.gamma0() * schedule.lambda0();
        let limit = dgf.grad_lipschitz() / problem.mu_h();
        if opts.override_validation {
            warnings.push(format!(
                "initial product check overridden: gamma0*lambda0 = {product} > {limit}"
            ));
        } else {
            return Err(SolverError::InitialProductTooLarge { product, limit });
        }
    }
    if problem.set().diameter_bound().is_none() {
        warnings.push(
            "feasible set is unbounded: subgradient-bound diagnostics are disabled".to_string(),
        );
    }

    let mut x = x0.to_vec();
    if !problem.set().contains(&x, 1e-12) {
        problem.set().project_in_place(&mut x);
        warnings.push("initial point was outside the feasible set and has been projected".into());
    }

    let n = x.len();
    let average = WeightedAverage::new(&x, schedule.weight_at(0));
    Ok(SolverState {
        k: 0,
        x,
        average,
        sample_count: 0,
        warnings,
        g_f: vec![0.0; n],
        g_h: vec![0.0; n],
        direction: vec![0.0; n],
        x_next: vec![0.0; n],
    })
}

/// Advance the state by one iteration.
pub fn step(
    state: &mut SolverState,
    problem: &BilevelProblem,
    dgf: &DistanceGenerator,
    schedule: &Schedule,
    src: &mut SampleSource,
) {
    let k = state.k;
    let (gamma, lambda) = schedule.values_at(k);

    // ξ_k first, then ξ̃_k: two independent draws from the one stream.
    problem.sample_subgrad_f_into(&state.x, src, &mut state.g_f);
    problem.sample_subgrad_h_into(&state.x, src, &mut state.g_h);
    if !problem.is_deterministic() {
        state.sample_count += 2;
    }

    for i in 0..state.direction.len() {
        state.direction[i] = gamma * (state.g_f[i] + lambda * state.g_h[i]);
    }
    dgf.prox_map_into(problem.set(), &state.x, &state.direction, &mut state.x_next);
    std::mem::swap(&mut state.x, &mut state.x_next);
    debug_assert!(problem.set().contains(&state.x, 1e-9), "prox left the feasible set");

    state.average.push(schedule.weight_at(k + 1), &state.x);
    state.k = k + 1;
}

/// Run `n` iterations (or stop early on the wall-clock budget) and collect
/// the checkpoint trace. Deterministic for a fixed seed.
pub fn run(
    problem: &BilevelProblem,
    dgf: &DistanceGenerator,
    schedule: &Schedule,
    x0: &[f64],
    n: u64,
    src: &mut SampleSource,
    opts: &SolverOptions,
) -> Result<RunReport, SolverError> {
    if n == 0 {
        return Err(SolverError::EmptyBudget);
    }
    let mut state = init(x0, problem, dgf, schedule, opts)?;
    let mut history = opts.capture_history.then(|| vec![state.x.clone()]);
    let mut trace = Vec::new();
    let started = Instant::now();

    let mut k_final = n;
    for _ in 0..n {
        step(&mut state, problem, dgf, schedule, src);
        if let Some(h) = history.as_mut() {
            h.push(state.x.clone());
        }
        let k = state.k;
        let budget_hit = opts
            .wall_clock_budget
            .map(|b| started.elapsed() >= b)
            .unwrap_or(false);
        if opts.checkpoints.is_checkpoint(k) || k == n || budget_hit {
            trace.push(make_row(&state, problem, schedule, opts, started));
        }
        if budget_hit {
            k_final = k;
            break;
        }
    }
    // The final iteration is always traced exactly once.
    if trace.last().map(|r| r.k) != Some(state.k) {
        trace.push(make_row(&state, problem, schedule, opts, started));
    }

    Ok(RunReport {
        final_average: state.average().to_vec(),
        final_iterate: state.x.clone(),
        trace,
        iterations: state.k.min(k_final),
        seed: src.seed(),
        gamma0: schedule.gamma0(),
        lambda0: schedule.lambda0(),
        exponent_a: schedule.exponent_a(),
        exponent_b: schedule.exponent_b(),
        averaging_exponent: schedule.averaging_exponent(),
        warnings: state.warnings.clone(),
        history,
    })
}

fn make_row(
    state: &SolverState,
    problem: &BilevelProblem,
    schedule: &Schedule,
    opts: &SolverOptions,
    started: Instant,
) -> TraceRow {
    let (gamma, lambda) = schedule.values_at(state.k);
    let (f_value, h_value) = if opts.eval_exact_at_checkpoints {
        (
            Some(problem.exact_f(state.average())),
            Some(problem.exact_h(state.average())),
        )
    } else {
        (None, None)
    };
    TraceRow {
        k: state.k,
        gamma,
        lambda,
        f_value,
        h_value,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    }
}

/// Direct evaluation of the weighted average Σ_t η_{t,k} x_t with
/// η_{t,k} = γ_t^r / Σ_{i=0..k} γ_i^r over a captured history x_0..x_k
/// (test support for the recursion).
pub fn closed_form_average(history: &[Vec<f64>], schedule: &Schedule, k: usize) -> Vec<f64> {
    assert!(k < history.len(), "history must hold x_0..x_k");
    let n = history[0].len();
    let mut acc = vec![0.0; n];
    let mut total = 0.0;
    for (t, x) in history.iter().enumerate().take(k + 1) {
        let w = schedule.weight_at(t as u64);
        total += w;
        for (a, &v) in acc.iter_mut().zip(x) {
            *a += w * v;
        }
    }
    for a in acc.iter_mut() {
        *a /= total;
    }
    acc
}
