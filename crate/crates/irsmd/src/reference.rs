//! Brute-force and high-accuracy baselines, plus the runtime diagnostics
//! that make the solver's theoretical quantities checkable at desk scale:
//!
//! * [`solve_regularized`] — deterministic projected subgradient descent on
//!   f + λh (strongly convex with modulus μ_h·λ) with the classical stepsize
//!   2/(μ_h λ (k+2)), returning a certified approximation of x*_λ;
//! * [`solve_inner`] — the inner optimal value f*, with a min-norm
//!   least-squares cross-check where applicable;
//! * [`solve_bilevel_bruteforce`] — grid enumeration of the bilevel optimum
//!   for problems of dimension ≤ 3 over compact sets;
//! * [`path_bound_check`] — verifies the regularization-path bound
//!   ‖x*_{λ_k} − x*_{λ_{k−1}}‖ ≤ (C_H/μ_h)|1 − λ_{k−1}/λ_k|;
//! * [`recursion_bound_check`] — Monte-Carlo check of the recursive error
//!   bound E[D(x_{k+1}, x*_{λ_k})] ≤ (γ_k/λ_k)·τ for k past the burn-in
//!   index k̄, with τ, B₁, ρ, k₁, k₂ derived numerically from the schedule.

use crate::geometry::{DistanceGenerator, FeasibleSet};
use crate::linalg::{dist2, norm2};
use crate::oracles::{BilevelProblem, SampleSource};
use crate::schedules::Schedule;
use crate::solver::{self, SolverOptions};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("feasible set must be compact for this diagnostic")]
    NotCompact,
    #[error("missing certified bound: {0}")]
    MissingBound(String),
    #[error("grid enumeration supports dimension <= 3, got {0}")]
    DimensionTooLarge(usize),
    #[error("lambda must be positive")]
    NonPositiveLambda,
    #[error("schedule does not satisfy the recursive-bound conditions: {0}")]
    ScheduleOutsideBoundRegime(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Solver(#[from] crate::solver::SolverError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Accuracy certificate for a baseline solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveCertificate {
    /// Objective-scale tolerance the solve stabilized to (requested).
    pub objective_tol: f64,
    /// Implied solution tolerance sqrt(2·tol/(μ_h·λ)) for regularized solves
    /// (grid resolution for brute-force solves).
    pub solution_tol: f64,
    pub converged: bool,
    pub iterations: u64,
}

#[derive(Debug, Clone)]
pub struct RegularizedSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub lambda: f64,
    pub certificate: SolveCertificate,
}

/// Approximate x*_λ by deterministic projected subgradient descent on
/// f_λ = f + λh with stepsize 2/(μ_h λ (k+2)) and (k+1)-weighted averaging,
/// starting from the projection of the origin.
pub fn solve_regularized(
    p: &BilevelProblem,
    lambda: f64,
    budget: u64,
    tol: f64,
) -> Result<RegularizedSolution, ReferenceError> {
    let x0 = p.set().project(&vec![0.0; p.dim()]).expect("projection of origin");
    solve_regularized_from(p, lambda, budget, tol, &x0)
}

pub fn solve_regularized_from(
    p: &BilevelProblem,
    lambda: f64,
    budget: u64,
    tol: f64,
    x0: &[f64],
) -> Result<RegularizedSolution, ReferenceError> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(ReferenceError::NonPositiveLambda);
    }
    let mu = p.mu_h() * lambda;
    let n = p.dim();
    let mut x = p
        .set()
        .project(x0)
        .map_err(|e| ReferenceError::Invalid(e.to_string()))?;
    let objective = |pt: &[f64]| p.exact_f(pt) + lambda * p.exact_h(pt);

    let mut g_f = vec![0.0; n];
    let mut g_h = vec![0.0; n];
    let mut avg = vec![0.0; n];
    let mut weight_total = 0.0;

    let mut best_x = x.clone();
    let mut best_val = objective(&x);
    let mut prev_estimate = f64::INFINITY;
    let mut converged = false;
    let mut next_review = 256u64.min(budget);
    let mut k = 0u64;
    while k < budget {
        p.inner().exact_subgrad_into(&x, &mut g_f);
        p.outer().exact_subgrad_into(&x, &mut g_h);
        let alpha = 2.0 / (mu * (k + 2) as f64);
        for i in 0..n {
            x[i] -= alpha * (g_f[i] + lambda * g_h[i]);
        }
        p.set().project_in_place(&mut x);
        // Weighted running average with weights (k+1).
        let w = (k + 1) as f64;
        weight_total += w;
        for (a, &v) in avg.iter_mut().zip(&x) {
            *a += (w / weight_total) * (v - *a);
        }
        k += 1;
        if k == next_review || k == budget {
            for cand in [&x, &avg] {
                let v = objective(cand);
                if v < best_val {
                    best_val = v;
                    best_x = cand.clone();
                }
            }
            if (prev_estimate - best_val).abs() <= tol * 0.25 {
                converged = true;
                break;
            }
            prev_estimate = best_val;
            next_review = (next_review * 2).min(budget);
        }
    }

    Ok(RegularizedSolution {
        x: best_x,
        objective: best_val,
        lambda,
        certificate: SolveCertificate {
            objective_tol: tol,
            solution_tol: (2.0 * tol / mu).sqrt(),
            converged,
            iterations: k,
        },
    })
}

#[derive(Debug, Clone)]
pub struct InnerSolution {
    /// Best certified upper bound on f*.
    pub objective: f64,
    pub x: Vec<f64>,
    /// Min-norm least-squares route, when the inner oracle is least squares.
    pub cross_check: Option<f64>,
    pub certificate: SolveCertificate,
}

/// Approximate f* by averaged projected subgradient descent (stepsize
/// α₀/√(k+1)); for least-squares problems the min-norm solution computed by
/// SVD provides an independent cross-check and usually the tighter value.
pub fn solve_inner(p: &BilevelProblem, budget: u64, tol: f64) -> Result<InnerSolution, ReferenceError> {
    let n = p.dim();
    let mut x = p.set().project(&vec![0.0; n]).expect("projection of origin");
    let mut g = vec![0.0; n];
    p.inner().exact_subgrad_into(&x, &mut g);
    let g0 = norm2(&g).max(1e-12);
    let alpha0 = 1.0 / g0.max(1.0);

    let mut avg = vec![0.0; n];
    let mut best_x = x.clone();
    let mut best_val = p.exact_f(&x);
    let mut prev_estimate = f64::INFINITY;
    let mut converged = false;
    let mut next_review = 256u64.min(budget);
    let mut k = 0u64;
    while k < budget {
        p.inner().exact_subgrad_into(&x, &mut g);
        let alpha = alpha0 / ((k + 1) as f64).sqrt();
        for i in 0..n {
            x[i] -= alpha * g[i];
        }
        p.set().project_in_place(&mut x);
        let kf = (k + 1) as f64;
        for (a, &v) in avg.iter_mut().zip(&x) {
            *a += (v - *a) / kf;
        }
        k += 1;
        if k == next_review || k == budget {
            for cand in [&x, &avg] {
                let v = p.exact_f(cand);
                if v < best_val {
                    best_val = v;
                    best_x = cand.clone();
                }
            }
            if (prev_estimate - best_val).abs() <= tol * 0.25 {
                converged = true;
                break;
            }
            prev_estimate = best_val;
            next_review = (next_review * 2).min(budget);
        }
    }

    let mut cross_check = None;
    if let Some(ls) = p.inner().as_least_squares() {
        let a = ls.matrix();
        let na = nalgebra::DMatrix::from_row_slice(a.rows(), a.cols(), a.data());
        let nb = nalgebra::DVector::from_column_slice(ls.rhs());
        let svd = na.clone().svd(true, true);
        if let Ok(sol) = svd.solve(&nb, 1e-12) {
            let x_ls: Vec<f64> = sol.iter().cloned().collect();
            // Only usable as a bound when the unconstrained minimizer is
            // feasible.
            if p.set().contains(&x_ls, 1e-9) {
                let v = p.exact_f(&x_ls);
                cross_check = Some(v);
                if v < best_val {
                    best_val = v;
                    best_x = x_ls;
                }
            }
        }
    }
    if let Some(c) = cross_check {
        converged = converged || (best_val - c).abs() <= tol.max(tol * c.abs());
    }

    Ok(InnerSolution {
        objective: best_val,
        x: best_x,
        cross_check,
        certificate: SolveCertificate {
            objective_tol: tol,
            solution_tol: f64::NAN,
            converged,
            iterations: k,
        },
    })
}

#[derive(Debug, Clone)]
pub struct BruteForceSolution {
    pub x: Vec<f64>,
    pub h_star: f64,
    pub f_min: f64,
    /// Accuracy scale of the enumeration: (L_f + L_h) times the grid
    /// covering radius.
    pub grid_slack: f64,
    pub kept_points: usize,
}

/// Grid enumeration of the bilevel optimum: find the grid minimum of f, keep
/// every grid point within a Lipschitz-derived slack of it, and return the
/// h-minimizer among the kept points.
pub fn solve_bilevel_bruteforce(
    p: &BilevelProblem,
    resolution: f64,
) -> Result<BruteForceSolution, ReferenceError> {
    let dim = p.dim();
    if dim > 3 {
        return Err(ReferenceError::DimensionTooLarge(dim));
    }
    if !p.set().is_compact() {
        return Err(ReferenceError::NotCompact);
    }
    if resolution.is_nan() || resolution <= 0.0 {
        return Err(ReferenceError::Invalid("resolution must be positive".into()));
    }

    let (lower, upper) = bounding_box(p.set());
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for d in 0..dim {
        let span = upper[d] - lower[d];
        let steps = (span / resolution).ceil().max(1.0) as usize;
        let axis: Vec<f64> = (0..=steps)
            .map(|i| lower[d] + span * i as f64 / steps as f64)
            .collect();
        axes.push(axis);
    }

    // Pass 1: grid minimum of f plus empirical Lipschitz estimates from
    // consecutive points (the grid is streamed, never stored).
    let mut f_min = f64::INFINITY;
    let mut l_f_emp: f64 = 0.0;
    let mut l_h_emp: f64 = 0.0;
    let mut any = false;
    {
        let mut prev: Option<(Vec<f64>, f64, f64)> = None;
        let mut visit = |pt: &[f64]| {
            let fv = p.exact_f(pt);
            let hv = p.exact_h(pt);
            any = true;
            f_min = f_min.min(fv);
            if let Some((pp, pf, ph)) = &prev {
                let d = dist2(pt, pp);
                if d > 0.0 {
                    l_f_emp = l_f_emp.max((fv - pf).abs() / d);
                    l_h_emp = l_h_emp.max((hv - ph).abs() / d);
                }
            }
            prev = Some((pt.to_vec(), fv, hv));
        };
        for_each_grid_point(&axes, p.set(), &mut visit);
    }
    if !any {
        return Err(ReferenceError::Invalid("grid contains no feasible points".into()));
    }
    let l_f = p.c_f().unwrap_or(l_f_emp.max(1e-12));
    let l_h = p.c_h().unwrap_or(l_h_emp.max(1e-12));

    // Pass 2: h-minimizer over the near-optimal slab.
    let covering_radius = 0.5 * resolution * (dim as f64).sqrt();
    let keep_slack = l_f * covering_radius;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut kept = 0usize;
    {
        let mut visit = |pt: &[f64]| {
            if p.exact_f(pt) <= f_min + keep_slack {
                kept += 1;
                let hv = p.exact_h(pt);
                if best.as_ref().is_none_or(|(_, bh)| hv < *bh) {
                    best = Some((pt.to_vec(), hv));
                }
            }
        };
        for_each_grid_point(&axes, p.set(), &mut visit);
    }
    let (x, h_star) = best.expect("kept set is nonempty");
    Ok(BruteForceSolution {
        x,
        h_star,
        f_min,
        grid_slack: (l_f + l_h) * covering_radius,
        kept_points: kept,
    })
}

fn for_each_grid_point(axes: &[Vec<f64>], set: &FeasibleSet, visit: &mut dyn FnMut(&[f64])) {
    let dim = axes.len();
    let mut idx = vec![0usize; dim];
    let mut point = vec![0.0; dim];
    loop {
        for d in 0..dim {
            point[d] = axes[d][idx[d]];
        }
        if set.contains(&point, 1e-12) {
            visit(&point);
        }
        let mut d = 0;
        loop {
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
            if d == dim {
                break;
            }
        }
        if d == dim {
            break;
        }
    }
}

fn bounding_box(set: &FeasibleSet) -> (Vec<f64>, Vec<f64>) {
    match set {
        FeasibleSet::Box { lower, upper } => (lower.clone(), upper.clone()),
        FeasibleSet::Ball { center, radius } => (
            center.iter().map(|c| c - radius).collect(),
            center.iter().map(|c| c + radius).collect(),
        ),
        FeasibleSet::WholeSpace { .. } => unreachable!("checked compact"),
    }
}

/// One row of a bound report; `rhs` already includes any slack, so
/// `pass == (lhs <= rhs)` and `margin == rhs − lhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub k: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

impl BoundRow {
    fn new(k: u64, lhs: f64, rhs: f64) -> Self {
        Self { k, lhs, rhs, margin: rhs - lhs, pass: lhs <= rhs }
    }
}

#[derive(Debug, Clone)]
pub struct PathBoundReport {
    pub rows: Vec<BoundRow>,
    pub passed: bool,
}

/// Solve x*_{λ_k} for k = 0..=k_max and check
/// ‖x*_{λ_k} − x*_{λ_{k−1}}‖ ≤ (C_H/μ_h)|1 − λ_{k−1}/λ_k| for k ≥ 1, with
/// slack 2·(soltol_{k−1} + soltol_k) from the two solve certificates added to
/// the right-hand side. An empty report (k_max = 0) passes vacuously.
pub fn path_bound_check(
    p: &BilevelProblem,
    schedule: &Schedule,
    k_max: u64,
    budget: u64,
    tol: f64,
) -> Result<PathBoundReport, ReferenceError> {
    let c_h = p
        .c_h()
        .ok_or_else(|| ReferenceError::MissingBound("C_H (compact set required)".into()))?;
    let mut solutions = Vec::with_capacity(k_max as usize + 1);
    for k in 0..=k_max {
        let lambda = schedule.lambda_at(k);
        solutions.push(solve_regularized(p, lambda, budget, tol)?);
    }
    let mut rows = Vec::new();
    for k in 1..=k_max as usize {
        let prev = &solutions[k - 1];
        let cur = &solutions[k];
        let lhs = dist2(&cur.x, &prev.x);
        let ratio = prev.lambda / cur.lambda;
        let slack = 2.0 * (prev.certificate.solution_tol + cur.certificate.solution_tol);
        let rhs = c_h / p.mu_h() * (1.0 - ratio).abs() + slack;
        rows.push(BoundRow::new(k as u64, lhs, rhs));
    }
    let passed = rows.iter().all(|r| r.pass);
    Ok(PathBoundReport { rows, passed })
}

/// Constants of the recursive error bound, derived numerically from the
/// schedule: τ ≥ 0 such that E[D(x_{k+1}, x*_{λ_k})] ≤ (γ_k/λ_k)·τ for all
/// k ≥ k̄ = max{k₁, k₂}.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoreticalBound {
    pub tau: f64,
    pub b1: f64,
    pub rho: f64,
    pub k1: u64,
    pub k2: u64,
    pub k_bar: u64,
    pub m: f64,
    pub m_h: Option<f64>,
}

/// Scan the schedule for the bound constants. `B₁` is the maximum over
/// k ≤ scan_limit of (λ_{k−1}/λ_k − 1)²/(γ_k³ λ_k) (so k₁ = 1); ρ is fixed at
/// 0.5 and k₂ is the first index from which
/// γ_{k−1}/λ_{k−1} ≤ (γ_k/λ_k)(1 + ρ·μ_h/(2L_ω)·γ_k λ_k) holds for good.
pub fn bound_constants(
    p: &BilevelProblem,
    dgf: &DistanceGenerator,
    schedule: &Schedule,
    scan_limit: u64,
) -> Result<TheoreticalBound, ReferenceError> {
    let report = schedule.bound_diagnostic_report();
    if !report.passed {
        let failed: Vec<&str> = report
            .conditions
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.condition.as_str())
            .collect();
        return Err(ReferenceError::ScheduleOutsideBoundRegime(failed.join("; ")));
    }
    let m = p
        .set()
        .diameter_bound()
        .ok_or(ReferenceError::NotCompact)?;
    let c_f = p
        .c_f()
        .ok_or_else(|| ReferenceError::MissingBound("C_F".into()))?;
    let c_h = p
        .c_h()
        .ok_or_else(|| ReferenceError::MissingBound("C_H".into()))?;
    let mu_h = p.mu_h();
    let l_om = dgf.grad_lipschitz();
    let mu_om = dgf.strong_convexity();

    let mut b1: f64 = 0.0;
    let rho = 0.5;
    let mut last_rho_violation = 0u64;
    let mut prev = schedule.values_at(0);
    for k in 1..=scan_limit {
        let (g, l) = schedule.values_at(k);
        let (g_prev, l_prev) = prev;
        let d = l_prev / l - 1.0;
        b1 = b1.max(d * d / (g * g * g * l));
        let needed_rho = ((g_prev * l) / (g * l_prev) - 1.0) * 2.0 * l_om / (mu_h * g * l);
        if needed_rho > rho {
            last_rho_violation = k;
        }
        prev = (g, l);
    }
    let k1 = 1;
    let k2 = last_rho_violation + 1;
    let k_bar = k1.max(k2);

    let (g_kb, l_kb) = schedule.values_at(k_bar - 1);
    let tau_start = 2.0 * l_om * m * m * l_kb / g_kb;
    let tau_tail = 2.0 * l_om
        * (2.0 * c_h * c_h * l_om.powi(3) * b1
            + 4.0 * c_f * c_f * mu_h.powi(3)
            + 4.0 * c_h * c_h * mu_h.powi(3) * l_kb * l_kb)
        / (mu_om * mu_h.powi(4) * (1.0 - rho));
    Ok(TheoreticalBound {
        tau: tau_start.max(tau_tail),
        b1,
        rho,
        k1,
        k2,
        k_bar,
        m,
        m_h: p.m_h(),
    })
}

#[derive(Debug, Clone)]
pub struct RecursionBoundReport {
    pub constants: TheoreticalBound,
    pub rows: Vec<BoundRow>,
    pub pass_fraction: f64,
    pub passed_all: bool,
}

/// Run `paths` solver sample paths and compare the empirical mean of
/// D(x_{k+1}, x*_{λ_k}) against (γ_k/λ_k)·τ for every k in [k̄, k_max]. No
/// assertion is made below k̄. `reg_budget`/`reg_tol` control the reference
/// solves for x*_{λ_k}.
#[allow(clippy::too_many_arguments)]
pub fn recursion_bound_check(
    p: &BilevelProblem,
    dgf: &DistanceGenerator,
    schedule: &Schedule,
    x0: &[f64],
    paths: usize,
    k_max: u64,
    base_seed: u64,
    reg_budget: u64,
    reg_tol: f64,
) -> Result<RecursionBoundReport, ReferenceError> {
    if paths == 0 {
        return Err(ReferenceError::Invalid("need at least one sample path".into()));
    }
    let constants = bound_constants(p, dgf, schedule, k_max.max(1_000_000))?;
    let k_bar = constants.k_bar;
    if k_max < k_bar {
        return Ok(RecursionBoundReport {
            constants,
            rows: Vec::new(),
            pass_fraction: 1.0,
            passed_all: true,
        });
    }

    // Reference optima for each checked index.
    let mut stars = Vec::with_capacity((k_max - k_bar + 1) as usize);
    for k in k_bar..=k_max {
        let lambda = schedule.lambda_at(k);
        stars.push(solve_regularized(p, lambda, reg_budget, reg_tol)?.x);
    }

    // Empirical mean of D(x_{k+1}, x*_{λ_k}) across paths.
    let window = (k_max - k_bar + 1) as usize;
    let mut mean_d = vec![0.0; window];
    let opts = SolverOptions {
        eval_exact_at_checkpoints: false,
        checkpoints: crate::solver::CheckpointPolicy::None,
        ..Default::default()
    };
    for path in 0..paths {
        let mut src = SampleSource::from_seed(base_seed + path as u64);
        let mut state = solver::init(x0, p, dgf, schedule, &opts)?;
        for k in 0..=k_max {
            solver::step(&mut state, p, dgf, schedule, &mut src);
            if k >= k_bar {
                let idx = (k - k_bar) as usize;
                let d = dgf
                    .bregman_distance(state.iterate(), &stars[idx])
                    .expect("dimensions agree");
                mean_d[idx] += d / paths as f64;
            }
        }
    }

    let mut rows = Vec::with_capacity(window);
    for (idx, &lhs) in mean_d.iter().enumerate() {
        let k = k_bar + idx as u64;
        let (g, l) = schedule.values_at(k);
        rows.push(BoundRow::new(k, lhs, g / l * constants.tau));
    }
    let passes = rows.iter().filter(|r| r.pass).count();
    Ok(RecursionBoundReport {
        constants,
        pass_fraction: passes as f64 / rows.len() as f64,
        passed_all: passes == rows.len(),
        rows,
    })
}

/// Serialize bound rows as `k,lhs,rhs,margin,pass` CSV.
pub fn bound_rows_to_csv(rows: &[BoundRow]) -> String {
    let mut out = String::from("k,lhs,rhs,margin,pass\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.k, r.lhs, r.rhs, r.margin, r.pass));
    }
    out
}

pub fn write_bound_rows_csv(rows: &[BoundRow], path: &Path) -> Result<(), ReferenceError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bound_rows_to_csv(rows).as_bytes())?;
    Ok(())
}
