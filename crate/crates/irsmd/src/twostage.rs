//! Compiler from scenario-based two-stage stochastic convex programs into
//! penalty-form bilevel problems.
//!
//! A two-stage program
//!
//! ```text
//! min  c(z) + Σ_i p_i q(y_i, ξ_i)
//! s.t. u_ℓ(z) ≤ 0                       ℓ = 1..L
//!      t_j(z) + w_j(y_i, ξ_i) ≤ 0       i = 1..N, j = 1..J
//!      z ∈ Z, y_i ∈ Y
//! ```
//!
//! compiles into a bilevel problem over the stacked variable
//! x = (z, y_1, …, y_N) ∈ X = Z × Y^N with
//!
//! ```text
//! F(x, ξ_i) = Σ_j max{0, t_j(z) + w_j(y_i, ξ_i)} + Σ_ℓ max{0, u_ℓ(z)}
//! H(x, ξ_i) = c(z) + q(y_i, ξ_i)
//! ```
//!
//! E\[F\] vanishes exactly on the feasible region of the original program, so
//! minimizing E\[H\] over argmin E\[F\] recovers its optimum. The inner penalty
//! is unweighted; scenario probabilities enter only through sampling, so
//! E[H(x, ξ)] = c(z) + Σ_i p_i q(y_i, ξ_i).
//!
//! Compactness is enforced by requiring box bounds on Z and Y. Whether every
//! z ∈ Z admits feasible recourse (nonempty Y_i(z)) cannot be verified here
//! and remains a modeling obligation of the caller.

use crate::config::{parse_sections, Section};
use crate::geometry::FeasibleSet;
use crate::linalg::{dot, norm2};
use crate::oracles::{BilevelProblem, FirstOrderOracle, OracleError, SampleSource};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TwoStageError {
    #[error("probabilities must be nonnegative and sum to 1 (sum = {0})")]
    BadProbabilities(f64),
    #[error("need at least one scenario")]
    NoScenarios,
    #[error("handle dimension mismatch: expected {expected}, got {got}")]
    HandleDimension { expected: usize, got: usize },
    #[error("scenario index {got} out of range (have {count})")]
    ScenarioOutOfRange { got: usize, count: usize },
    #[error("coupling constraint needs one second-stage handle per scenario")]
    CouplingShape,
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("problem file: {0}")]
    File(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// A convex piece supplying a value and one subgradient. Implementations
/// must be convex on the relevant box; the compiler takes that on trust.
pub trait ConvexHandle: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, v: &[f64]) -> f64;
    fn subgrad_into(&self, v: &[f64], out: &mut [f64]);
    /// out += subgrad(v); hot path of the penalty oracle.
    fn subgrad_accumulate(&self, v: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; self.dim()];
        self.subgrad_into(v, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
    }
    /// Strong-convexity modulus in ℓ₂, when known.
    fn strong_convexity(&self) -> f64 {
        0.0
    }
    /// sup ‖subgrad‖₂ over the box, when computable.
    fn subgrad_bound(&self, _lower: &[f64], _upper: &[f64]) -> Option<f64> {
        None
    }
    /// sup |value| over the box, when computable.
    fn value_bound(&self, _lower: &[f64], _upper: &[f64]) -> Option<f64> {
        None
    }
}

/// ⟨coeffs, v⟩ + offset.
#[derive(Debug, Clone)]
pub struct AffineHandle {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl AffineHandle {
    pub fn new(coeffs: Vec<f64>, offset: f64) -> Self {
        Self { coeffs, offset }
    }
}

impl ConvexHandle for AffineHandle {
    fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn value(&self, v: &[f64]) -> f64 {
        dot(&self.coeffs, v) + self.offset
    }

    fn subgrad_into(&self, _v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.coeffs);
    }

    fn subgrad_accumulate(&self, _v: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.coeffs) {
            *o += c;
        }
    }

    fn subgrad_bound(&self, _lower: &[f64], _upper: &[f64]) -> Option<f64> {
        Some(norm2(&self.coeffs))
    }

    fn value_bound(&self, lower: &[f64], upper: &[f64]) -> Option<f64> {
        let mut hi = self.offset.abs();
        for ((&c, &l), &u) in self.coeffs.iter().zip(lower).zip(upper) {
            hi += (c * l).abs().max((c * u).abs());
        }
        Some(hi)
    }
}

/// ½⟨v, q∘v⟩ + ⟨w, v⟩ + offset with q ≥ 0 componentwise.
#[derive(Debug, Clone)]
pub struct QuadraticHandle {
    pub quad: Vec<f64>,
    pub linear: Vec<f64>,
    pub offset: f64,
}

impl QuadraticHandle {
    pub fn new(quad: Vec<f64>, linear: Vec<f64>, offset: f64) -> Result<Self, TwoStageError> {
        if quad.len() != linear.len() {
            return Err(TwoStageError::HandleDimension { expected: quad.len(), got: linear.len() });
        }
        if quad.iter().any(|&q| q < 0.0) {
            return Err(TwoStageError::File("quadratic coefficients must be >= 0".into()));
        }
        Ok(Self { quad, linear, offset })
    }
}

impl ConvexHandle for QuadraticHandle {
    fn dim(&self) -> usize {
        self.quad.len()
    }

    fn value(&self, v: &[f64]) -> f64 {
        let mut s = self.offset;
        for ((&vi, &q), &w) in v.iter().zip(&self.quad).zip(&self.linear) {
            s += 0.5 * q * vi * vi + w * vi;
        }
        s
    }

    fn subgrad_into(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..v.len() {
            out[i] = self.quad[i] * v[i] + self.linear[i];
        }
    }

    fn subgrad_accumulate(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..v.len() {
            out[i] += self.quad[i] * v[i] + self.linear[i];
        }
    }

    fn strong_convexity(&self) -> f64 {
        self.quad.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    fn subgrad_bound(&self, lower: &[f64], upper: &[f64]) -> Option<f64> {
        let mut sum = 0.0;
        for i in 0..self.quad.len() {
            let lo = self.quad[i] * lower[i] + self.linear[i];
            let hi = self.quad[i] * upper[i] + self.linear[i];
            sum += lo.abs().max(hi.abs()).powi(2);
        }
        Some(sum.sqrt())
    }

    fn value_bound(&self, lower: &[f64], upper: &[f64]) -> Option<f64> {
        let mut hi = self.offset.abs();
        for i in 0..self.quad.len() {
            let m = lower[i].abs().max(upper[i].abs());
            hi += 0.5 * self.quad[i] * m * m + (self.linear[i] * m).abs();
        }
        Some(hi)
    }
}

/// One coupling row t_j(z) + w_j(y_i, ξ_i) ≤ 0: a first-stage handle plus one
/// second-stage handle per scenario.
pub struct CouplingConstraint {
    pub first: Arc<dyn ConvexHandle>,
    pub second: Vec<Arc<dyn ConvexHandle>>,
}

/// Declarative description of the two-stage program.
pub struct TwoStageSpec {
    pub first_lower: Vec<f64>,
    pub first_upper: Vec<f64>,
    pub second_lower: Vec<f64>,
    pub second_upper: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// c(z).
    pub objective_first: Arc<dyn ConvexHandle>,
    /// q(·, ξ_i), one per scenario.
    pub objective_second: Vec<Arc<dyn ConvexHandle>>,
    /// u_ℓ(z) ≤ 0.
    pub first_constraints: Vec<Arc<dyn ConvexHandle>>,
    /// t_j(z) + w_j(y_i, ξ_i) ≤ 0.
    pub coupling: Vec<CouplingConstraint>,
}

struct Compiled {
    n: usize,
    m: usize,
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
    spec: TwoStageSpec,
    mu_h: f64,
}

impl Compiled {
    fn scenario_count(&self) -> usize {
        self.probabilities.len()
    }

    fn stacked_dim(&self) -> usize {
        self.n + self.m * self.scenario_count()
    }

    fn z<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[..self.n]
    }

    fn y<'a>(&self, x: &'a [f64], i: usize) -> &'a [f64] {
        let start = self.n + i * self.m;
        &x[start..start + self.m]
    }

    fn draw(&self, src: &mut SampleSource) -> usize {
        let u = src.unit();
        match self.cumulative.iter().position(|&c| u < c) {
            Some(i) => i,
            None => self.scenario_count() - 1,
        }
    }

    fn penalty_value(&self, x: &[f64], i: usize) -> f64 {
        let z = self.z(x);
        let y = self.y(x, i);
        let mut total = 0.0;
        for c in &self.spec.coupling {
            let v = c.first.value(z) + c.second[i].value(y);
            if v > 0.0 {
                total += v;
            }
        }
        for u in &self.spec.first_constraints {
            let v = u.value(z);
            if v > 0.0 {
                total += v;
            }
        }
        total
    }

    /// Active-branch subgradient; terms at exactly zero contribute nothing,
    /// and only the (z, y_i) blocks are touched.
    fn penalty_subgrad(&self, x: &[f64], i: usize, out: &mut [f64]) {
        out.fill(0.0);
        let z = self.z(x);
        let y = self.y(x, i);
        let (z_out, rest) = out.split_at_mut(self.n);
        let y_out = &mut rest[i * self.m..(i + 1) * self.m];
        for c in &self.spec.coupling {
            if c.first.value(z) + c.second[i].value(y) > 0.0 {
                c.first.subgrad_accumulate(z, z_out);
                c.second[i].subgrad_accumulate(y, y_out);
            }
        }
        for u in &self.spec.first_constraints {
            if u.value(z) > 0.0 {
                u.subgrad_accumulate(z, z_out);
            }
        }
    }

    fn objective_value(&self, x: &[f64], i: usize) -> f64 {
        self.spec.objective_first.value(self.z(x)) + self.spec.objective_second[i].value(self.y(x, i))
    }

    fn objective_subgrad(&self, x: &[f64], i: usize, out: &mut [f64]) {
        out.fill(0.0);
        let (z_out, rest) = out.split_at_mut(self.n);
        self.spec.objective_first.subgrad_into(self.z(x), z_out);
        let y_out = &mut rest[i * self.m..(i + 1) * self.m];
        self.spec.objective_second[i].subgrad_into(self.y(x, i), y_out);
    }
}

/// The compiled bilevel problem: stacked feasible box plus penalty/objective
/// oracles.
#[derive(Clone)]
pub struct CompiledBilevel {
    shared: Arc<Compiled>,
    set: FeasibleSet,
}

/// Validate the program description and build the stacked-problem oracles.
pub fn compile(spec: TwoStageSpec) -> Result<CompiledBilevel, TwoStageError> {
    let n = spec.first_lower.len();
    let m = spec.second_lower.len();
    if spec.first_upper.len() != n || spec.second_upper.len() != m {
        return Err(TwoStageError::HandleDimension { expected: n, got: spec.first_upper.len() });
    }
    let count = spec.probabilities.len();
    if count == 0 {
        return Err(TwoStageError::NoScenarios);
    }
    let sum: f64 = spec.probabilities.iter().sum();
    if spec.probabilities.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(TwoStageError::BadProbabilities(sum));
    }
    check_dim(&*spec.objective_first, n)?;
    if spec.objective_second.len() != count {
        return Err(TwoStageError::CouplingShape);
    }
    for h in &spec.objective_second {
        check_dim(&**h, m)?;
    }
    for h in &spec.first_constraints {
        check_dim(&**h, n)?;
    }
    for c in &spec.coupling {
        check_dim(&*c.first, n)?;
        if c.second.len() != count {
            return Err(TwoStageError::CouplingShape);
        }
        for h in &c.second {
            check_dim(&**h, m)?;
        }
    }

    // Strong convexity of E[H] over the stack: the z block carries the
    // modulus of c, the y_i block carries p_i times the modulus of q(·, ξ_i).
    let mu_z = spec.objective_first.strong_convexity();
    let mu_h = spec
        .objective_second
        .iter()
        .zip(&spec.probabilities)
        .map(|(q, p)| p * q.strong_convexity())
        .fold(mu_z, f64::min);

    let mut cumulative = Vec::with_capacity(count);
    let mut acc = 0.0;
    for &p in &spec.probabilities {
        acc += p;
        cumulative.push(acc);
    }

    let mut lower = spec.first_lower.clone();
    let mut upper = spec.first_upper.clone();
    for _ in 0..count {
        lower.extend_from_slice(&spec.second_lower);
        upper.extend_from_slice(&spec.second_upper);
    }
    let set = FeasibleSet::bounded_box(lower, upper)
        .map_err(|e| TwoStageError::File(e.to_string()))?;

    let probabilities = spec.probabilities.clone();
    Ok(CompiledBilevel {
        shared: Arc::new(Compiled { n, m, probabilities, cumulative, spec, mu_h }),
        set,
    })
}

fn check_dim(h: &dyn ConvexHandle, expected: usize) -> Result<(), TwoStageError> {
    if h.dim() != expected {
        Err(TwoStageError::HandleDimension { expected, got: h.dim() })
    } else {
        Ok(())
    }
}

impl CompiledBilevel {
    pub fn stacked_dim(&self) -> usize {
        self.shared.stacked_dim()
    }

    pub fn scenario_count(&self) -> usize {
        self.shared.scenario_count()
    }

    pub fn feasible_set(&self) -> &FeasibleSet {
        &self.set
    }

    /// Strong-convexity modulus of E\[H\] derived from the quadratic handles
    /// (0 when any block is merely convex).
    pub fn strong_convexity(&self) -> f64 {
        self.shared.mu_h
    }

    pub fn eval_penalty(&self, x: &[f64], i: usize) -> Result<f64, TwoStageError> {
        self.check(x, i)?;
        Ok(self.shared.penalty_value(x, i))
    }

    pub fn eval_objective(&self, x: &[f64], i: usize) -> Result<f64, TwoStageError> {
        self.check(x, i)?;
        Ok(self.shared.objective_value(x, i))
    }

    pub fn penalty_subgrad(&self, x: &[f64], i: usize) -> Result<Vec<f64>, TwoStageError> {
        self.check(x, i)?;
        let mut out = vec![0.0; self.stacked_dim()];
        self.shared.penalty_subgrad(x, i, &mut out);
        Ok(out)
    }

    pub fn objective_subgrad(&self, x: &[f64], i: usize) -> Result<Vec<f64>, TwoStageError> {
        self.check(x, i)?;
        let mut out = vec![0.0; self.stacked_dim()];
        self.shared.objective_subgrad(x, i, &mut out);
        Ok(out)
    }

    fn check(&self, x: &[f64], i: usize) -> Result<(), TwoStageError> {
        if x.len() != self.stacked_dim() {
            return Err(TwoStageError::HandleDimension {
                expected: self.stacked_dim(),
                got: x.len(),
            });
        }
        if i >= self.scenario_count() {
            return Err(TwoStageError::ScenarioOutOfRange { got: i, count: self.scenario_count() });
        }
        Ok(())
    }

    /// Wire the penalty/objective oracles into a [`BilevelProblem`] over the
    /// stacked box.
    pub fn into_problem(self) -> Result<BilevelProblem, TwoStageError> {
        self.to_problem()
    }

    /// Like [`Self::into_problem`] but keeps the compiled form alive (the
    /// oracles share it).
    pub fn to_problem(&self) -> Result<BilevelProblem, TwoStageError> {
        let inner = Arc::new(PenaltyOracle { shared: self.shared.clone() });
        let outer = Arc::new(ObjectiveOracle { shared: self.shared.clone() });
        Ok(BilevelProblem::new(inner, outer, self.set.clone())?)
    }

    /// Enumerate the stacked box on a grid with spacing at most `resolution`
    /// per axis, keep the points where every scenario penalty is ≤ `feas_tol`
    /// (i.e. all constraints hold up to rounding), and return the E\[H\]
    /// minimizer among them. Streams the grid, so memory stays O(dim).
    pub fn grid_minimum(
        &self,
        resolution: f64,
        feas_tol: f64,
    ) -> Result<(Vec<f64>, f64), TwoStageError> {
        if resolution.is_nan() || resolution <= 0.0 {
            return Err(TwoStageError::File("resolution must be positive".into()));
        }
        let FeasibleSet::Box { lower, upper } = &self.set else {
            return Err(TwoStageError::File("stacked set must be a box".into()));
        };
        let dim = self.stacked_dim();
        let axes: Vec<Vec<f64>> = (0..dim)
            .map(|d| {
                let span = upper[d] - lower[d];
                let steps = (span / resolution).ceil().max(1.0) as usize;
                (0..=steps)
                    .map(|i| lower[d] + span * i as f64 / steps as f64)
                    .collect()
            })
            .collect();

        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut idx = vec![0usize; dim];
        let mut point = vec![0.0; dim];
        loop {
            for d in 0..dim {
                point[d] = axes[d][idx[d]];
            }
            let feasible = (0..self.scenario_count())
                .all(|i| self.shared.penalty_value(&point, i) <= feas_tol);
            if feasible {
                let value: f64 = (0..self.scenario_count())
                    .map(|i| self.shared.probabilities[i] * self.shared.objective_value(&point, i))
                    .sum();
                if best.as_ref().is_none_or(|(_, v)| value < *v) {
                    best = Some((point.clone(), value));
                }
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
        best.ok_or_else(|| TwoStageError::File("no feasible grid point found".into()))
    }
}

struct PenaltyOracle {
    shared: Arc<Compiled>,
}

impl FirstOrderOracle for PenaltyOracle {
    fn dim(&self) -> usize {
        self.shared.stacked_dim()
    }

    fn scenario_count(&self) -> usize {
        self.shared.scenario_count()
    }

    fn scenario_weight(&self, i: usize) -> f64 {
        self.shared.probabilities[i]
    }

    fn scenario_value(&self, x: &[f64], i: usize) -> f64 {
        self.shared.penalty_value(x, i)
    }

    fn scenario_subgrad_into(&self, x: &[f64], i: usize, out: &mut [f64]) {
        self.shared.penalty_subgrad(x, i, out);
    }

    fn draw_scenario(&self, src: &mut SampleSource) -> usize {
        self.shared.draw(src)
    }

    fn subgrad_norm_bound(&self, set: &FeasibleSet) -> Option<f64> {
        let FeasibleSet::Box { lower, upper } = set else { return None };
        let (zl, zu) = (&lower[..self.shared.n], &upper[..self.shared.n]);
        // z block: sum of all potentially active first-stage gradients;
        // y block: per-scenario worst case over coupling terms evaluated on
        // that scenario's own slice of the box.
        let mut z_bound = 0.0;
        for u in &self.shared.spec.first_constraints {
            z_bound += u.subgrad_bound(zl, zu)?;
        }
        for c in &self.shared.spec.coupling {
            z_bound += c.first.subgrad_bound(zl, zu)?;
        }
        let mut y_bound: f64 = 0.0;
        for i in 0..self.shared.scenario_count() {
            let lo = self.shared.n + i * self.shared.m;
            let (yl, yu) = (&lower[lo..lo + self.shared.m], &upper[lo..lo + self.shared.m]);
            let mut s = 0.0;
            for c in &self.shared.spec.coupling {
                s += c.second[i].subgrad_bound(yl, yu)?;
            }
            y_bound = y_bound.max(s);
        }
        Some((z_bound * z_bound + y_bound * y_bound).sqrt())
    }
}

struct ObjectiveOracle {
    shared: Arc<Compiled>,
}

impl FirstOrderOracle for ObjectiveOracle {
    fn dim(&self) -> usize {
        self.shared.stacked_dim()
    }

    fn scenario_count(&self) -> usize {
        self.shared.scenario_count()
    }

    fn scenario_weight(&self, i: usize) -> f64 {
        self.shared.probabilities[i]
    }

    fn scenario_value(&self, x: &[f64], i: usize) -> f64 {
        self.shared.objective_value(x, i)
    }

    fn scenario_subgrad_into(&self, x: &[f64], i: usize, out: &mut [f64]) {
        self.shared.objective_subgrad(x, i, out);
    }

    fn draw_scenario(&self, src: &mut SampleSource) -> usize {
        self.shared.draw(src)
    }

    fn subgrad_norm_bound(&self, set: &FeasibleSet) -> Option<f64> {
        let FeasibleSet::Box { lower, upper } = set else { return None };
        let (zl, zu) = (&lower[..self.shared.n], &upper[..self.shared.n]);
        let zb = self.shared.spec.objective_first.subgrad_bound(zl, zu)?;
        let mut yb: f64 = 0.0;
        for (i, q) in self.shared.spec.objective_second.iter().enumerate() {
            let lo = self.shared.n + i * self.shared.m;
            yb = yb.max(q.subgrad_bound(&lower[lo..lo + self.shared.m], &upper[lo..lo + self.shared.m])?);
        }
        Some((zb * zb + yb * yb).sqrt())
    }

    fn value_bound(&self, set: &FeasibleSet) -> Option<f64> {
        let FeasibleSet::Box { lower, upper } = set else { return None };
        let (zl, zu) = (&lower[..self.shared.n], &upper[..self.shared.n]);
        let cb = self.shared.spec.objective_first.value_bound(zl, zu)?;
        let mut qb: f64 = 0.0;
        for (i, q) in self.shared.spec.objective_second.iter().enumerate() {
            let lo = self.shared.n + i * self.shared.m;
            qb = qb.max(q.value_bound(&lower[lo..lo + self.shared.m], &upper[lo..lo + self.shared.m])?);
        }
        Some(cb + qb)
    }

    fn strong_convexity(&self) -> f64 {
        self.shared.mu_h
    }
}

/// Parse the declarative problem file. Sections: one `[problem]` block with
/// dimensions and boxes, one `[objective]` block with the c(z) coefficients,
/// one `[scenario]` block per scenario (probability plus q coefficients),
/// `[constraint.first]` blocks for u_ℓ(z) ≤ 0, and `[constraint.coupling]`
/// blocks with t-coefficients plus one `w = coeffs... offset` line per
/// scenario.
pub fn load_two_stage_file(path: &Path) -> Result<TwoStageSpec, TwoStageError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| TwoStageError::Io { path: path.to_path_buf(), source })?;
    parse_two_stage(&text)
}

pub fn parse_two_stage(text: &str) -> Result<TwoStageSpec, TwoStageError> {
    let sections = parse_sections(text).map_err(|e| TwoStageError::File(e.to_string()))?;
    let find = |name: &str| sections.iter().find(|s| s.name == name);
    let problem = find("problem").ok_or_else(|| TwoStageError::File("missing [problem]".into()))?;

    let n = get_u64(problem, "first_stage_dim")? as usize;
    let m = get_u64(problem, "second_stage_dim")? as usize;
    let first_lower = get_list(problem, "first_stage_lower", n)?;
    let first_upper = get_list(problem, "first_stage_upper", n)?;
    let second_lower = get_list(problem, "second_stage_lower", m)?;
    let second_upper = get_list(problem, "second_stage_upper", m)?;

    let objective = find("objective").ok_or_else(|| TwoStageError::File("missing [objective]".into()))?;
    let objective_first: Arc<dyn ConvexHandle> = Arc::new(parse_quadratic(objective, "c", n)?);

    let mut probabilities = Vec::new();
    let mut objective_second: Vec<Arc<dyn ConvexHandle>> = Vec::new();
    for s in sections.iter().filter(|s| s.name == "scenario") {
        probabilities.push(
            s.parse_f64("probability")
                .map_err(|e| TwoStageError::File(e.to_string()))?
                .ok_or_else(|| TwoStageError::File("[scenario] requires probability".into()))?,
        );
        objective_second.push(Arc::new(parse_quadratic(s, "q", m)?));
    }
    if probabilities.is_empty() {
        return Err(TwoStageError::NoScenarios);
    }
    let count = probabilities.len();

    let mut first_constraints: Vec<Arc<dyn ConvexHandle>> = Vec::new();
    for s in sections.iter().filter(|s| s.name == "constraint.first") {
        let coeffs = get_list(s, "coeffs", n)?;
        let offset = s
            .parse_f64("offset")
            .map_err(|e| TwoStageError::File(e.to_string()))?
            .unwrap_or(0.0);
        first_constraints.push(Arc::new(AffineHandle::new(coeffs, offset)));
    }

    let mut coupling = Vec::new();
    for s in sections.iter().filter(|s| s.name == "constraint.coupling") {
        let t_coeffs = get_list(s, "t_coeffs", n)?;
        let t_offset = s
            .parse_f64("t_offset")
            .map_err(|e| TwoStageError::File(e.to_string()))?
            .unwrap_or(0.0);
        let mut second: Vec<Arc<dyn ConvexHandle>> = Vec::new();
        for w in s.get_all("w") {
            let nums = crate::config::parse_number_list(w)
                .map_err(|e| TwoStageError::File(format!("w line: {e}")))?;
            if nums.len() != m + 1 {
                return Err(TwoStageError::File(format!(
                    "w line needs {m} coefficients plus an offset, got {} numbers",
                    nums.len()
                )));
            }
            second.push(Arc::new(AffineHandle::new(nums[..m].to_vec(), nums[m])));
        }
        if second.len() != count {
            return Err(TwoStageError::CouplingShape);
        }
        coupling.push(CouplingConstraint {
            first: Arc::new(AffineHandle::new(t_coeffs, t_offset)),
            second,
        });
    }

    Ok(TwoStageSpec {
        first_lower,
        first_upper,
        second_lower,
        second_upper,
        probabilities,
        objective_first,
        objective_second,
        first_constraints,
        coupling,
    })
}

fn get_u64(s: &Section, key: &str) -> Result<u64, TwoStageError> {
    s.parse_u64(key)
        .map_err(|e| TwoStageError::File(e.to_string()))?
        .ok_or_else(|| TwoStageError::File(format!("[{}] requires {key}", s.name)))
}

fn get_list(s: &Section, key: &str, dim: usize) -> Result<Vec<f64>, TwoStageError> {
    let v = s
        .parse_f64_list(key)
        .map_err(|e| TwoStageError::File(e.to_string()))?
        .ok_or_else(|| TwoStageError::File(format!("[{}] requires {key}", s.name)))?;
    if v.len() == 1 && dim > 1 {
        return Ok(vec![v[0]; dim]);
    }
    if v.len() != dim {
        return Err(TwoStageError::File(format!(
            "[{}] {key}: expected {dim} values, got {}",
            s.name,
            v.len()
        )));
    }
    Ok(v)
}

fn parse_quadratic(s: &Section, prefix: &str, dim: usize) -> Result<QuadraticHandle, TwoStageError> {
    let quad = s
        .parse_f64_list(&format!("{prefix}_quad"))
        .map_err(|e| TwoStageError::File(e.to_string()))?
        .map(|v| broadcast(v, dim))
        .transpose()?
        .unwrap_or_else(|| vec![0.0; dim]);
    let linear = s
        .parse_f64_list(&format!("{prefix}_linear"))
        .map_err(|e| TwoStageError::File(e.to_string()))?
        .map(|v| broadcast(v, dim))
        .transpose()?
        .unwrap_or_else(|| vec![0.0; dim]);
    let offset = s
        .parse_f64(&format!("{prefix}_offset"))
        .map_err(|e| TwoStageError::File(e.to_string()))?
        .unwrap_or(0.0);
    QuadraticHandle::new(quad, linear, offset)
}

fn broadcast(v: Vec<f64>, dim: usize) -> Result<Vec<f64>, TwoStageError> {
    if v.len() == dim {
        Ok(v)
    } else if v.len() == 1 {
        Ok(vec![v[0]; dim])
    } else {
        Err(TwoStageError::File(format!("expected {dim} values, got {}", v.len())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// z ∈ [0, 1.5], y ∈ [0, 2], two scenarios ξ ∈ {1, 2} with p = ½ each,
    /// c(z) = z², q(y) = y², u(z) = z − 1.5 ≤ 0, −z + (ξ − y) ≤ 0.
    /// Compact optimum: z = 0.75, y = (0.25, 1.25), objective 1.375.
    pub(crate) fn toy_spec() -> TwoStageSpec {
        TwoStageSpec {
            first_lower: vec![0.0],
            first_upper: vec![1.5],
            second_lower: vec![0.0],
            second_upper: vec![2.0],
            probabilities: vec![0.5, 0.5],
            objective_first: Arc::new(QuadraticHandle::new(vec![2.0], vec![0.0], 0.0).unwrap()),
            objective_second: vec![
                Arc::new(QuadraticHandle::new(vec![2.0], vec![0.0], 0.0).unwrap()),
                Arc::new(QuadraticHandle::new(vec![2.0], vec![0.0], 0.0).unwrap()),
            ],
            first_constraints: vec![Arc::new(AffineHandle::new(vec![1.0], -1.5))],
            coupling: vec![CouplingConstraint {
                first: Arc::new(AffineHandle::new(vec![-1.0], 0.0)),
                second: vec![
                    Arc::new(AffineHandle::new(vec![-1.0], 1.0)),
                    Arc::new(AffineHandle::new(vec![-1.0], 2.0)),
                ],
            }],
        }
    }

    #[test]
    fn empty_penalty_without_constraints() {
        let spec = TwoStageSpec {
            first_lower: vec![0.0],
            first_upper: vec![1.0],
            second_lower: vec![0.0],
            second_upper: vec![1.0],
            probabilities: vec![1.0],
            objective_first: Arc::new(QuadraticHandle::new(vec![2.0], vec![0.0], 0.0).unwrap()),
            objective_second: vec![Arc::new(QuadraticHandle::new(vec![2.0], vec![0.0], 0.0).unwrap())],
            first_constraints: vec![],
            coupling: vec![],
        };
        let c = compile(spec).unwrap();
        let x = [0.4, 0.7];
        assert_eq!(c.eval_penalty(&x, 0).unwrap(), 0.0);
        assert!((c.eval_objective(&x, 0).unwrap() - 0.65).abs() < 1e-15);
    }

    #[test]
    fn first_stage_violation_hits_every_scenario() {
        // u(z) = z - 1 with z = 3 contributes max{0, 2} = 2 to each scenario.
        let mut spec = toy_spec();
        spec.first_upper = vec![5.0];
        spec.first_constraints = vec![Arc::new(AffineHandle::new(vec![1.0], -1.0))];
        spec.coupling.clear();
        let c = compile(spec).unwrap();
        let x = [3.0, 0.0, 0.0];
        assert_eq!(c.eval_penalty(&x, 0).unwrap(), 2.0);
        assert_eq!(c.eval_penalty(&x, 1).unwrap(), 2.0);
    }

    #[test]
    fn feasible_point_has_zero_penalty_and_subgradient() {
        let c = compile(toy_spec()).unwrap();
        let x = [1.0, 0.5, 1.5]; // 1 - 1 - 0.5 < 0, 2 - 1 - 1.5 < 0, z < 1.5
        for i in 0..2 {
            assert_eq!(c.eval_penalty(&x, i).unwrap(), 0.0);
            assert!(c.penalty_subgrad(&x, i).unwrap().iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn active_tie_contributes_zero() {
        let c = compile(toy_spec()).unwrap();
        // Scenario 0 coupling: -z + 1 - y = 0 at z = 0.6, y = 0.4.
        let x = [0.6, 0.4, 2.0];
        assert_eq!(c.eval_penalty(&x, 0).unwrap(), 0.0);
        assert!(c.penalty_subgrad(&x, 0).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn objective_example() {
        // c(z) = ||z||^2, q(y, ξ_i) = ξ_i * Σy with z = (1,), y_i = (2,), ξ_i = 3 -> 7.
        let spec = TwoStageSpec {
            first_lower: vec![-5.0],
            first_upper: vec![5.0],
            second_lower: vec![-5.0],
            second_upper: vec![5.0],
            probabilities: vec![1.0],
            objective_first: Arc::new(QuadraticHandle::new(vec![2.0], vec![0.0], 0.0).unwrap()),
            objective_second: vec![Arc::new(AffineHandle::new(vec![3.0], 0.0))],
            first_constraints: vec![],
            coupling: vec![],
        };
        let c = compile(spec).unwrap();
        assert_eq!(c.eval_objective(&[1.0, 2.0], 0).unwrap(), 7.0);
    }

    #[test]
    fn subgradient_block_sparsity() {
        let c = compile(toy_spec()).unwrap();
        // Violate scenario 1's coupling only: z = 0, y2 = 0 -> 2 - 0 - 0 > 0.
        let x = [0.0, 1.5, 0.0];
        let g = c.penalty_subgrad(&x, 1).unwrap();
        // z and y_2 blocks touched; y_1 block untouched.
        assert!(g[1].abs() == 0.0);
        assert!(g[0] != 0.0 || g[2] != 0.0);

        let g0 = c.penalty_subgrad(&x, 0).unwrap();
        assert_eq!(g0[2], 0.0); // scenario 0 never touches y_2
    }

    #[test]
    fn probabilities_validated() {
        let mut spec = toy_spec();
        spec.probabilities = vec![0.5, 0.6];
        assert!(matches!(compile(spec), Err(TwoStageError::BadProbabilities(_))));
    }

    #[test]
    fn scenario_index_out_of_range() {
        let c = compile(toy_spec()).unwrap();
        assert!(matches!(
            c.eval_penalty(&[0.0, 0.0, 0.0], 2),
            Err(TwoStageError::ScenarioOutOfRange { .. })
        ));
    }

    #[test]
    fn strong_convexity_over_stack() {
        let c = compile(toy_spec()).unwrap();
        // min(2, 0.5*2, 0.5*2) = 1.
        assert_eq!(c.strong_convexity(), 1.0);
    }

    #[test]
    fn parse_round_trip() {
        let text = "\
[problem]
first_stage_dim = 1
second_stage_dim = 1
first_stage_lower = 0
first_stage_upper = 1.5
second_stage_lower = 0
second_stage_upper = 2

[objective]
c_quad = 2

[scenario]
probability = 0.5
q_quad = 2

[scenario]
probability = 0.5
q_quad = 2

[constraint.first]
coeffs = 1
offset = -1.5

[constraint.coupling]
t_coeffs = -1
w = -1 1
w = -1 2
";
        let spec = parse_two_stage(text).unwrap();
        let c = compile(spec).unwrap();
        assert_eq!(c.stacked_dim(), 3);
        assert_eq!(c.scenario_count(), 2);
        // Same toy as toy_spec(): spot-check one penalty value.
        let hand = compile(toy_spec()).unwrap();
        let x = [0.1, 0.2, 0.3];
        for i in 0..2 {
            assert_eq!(
                c.eval_penalty(&x, i).unwrap(),
                hand.eval_penalty(&x, i).unwrap()
            );
        }
    }

    #[test]
    fn weighted_scenario_draws_match_probabilities() {
        let mut spec = toy_spec();
        spec.probabilities = vec![0.25, 0.75];
        let p = compile(spec).unwrap().into_problem().unwrap();
        let mut src = SampleSource::from_seed(13);
        let mut counts = [0usize; 2];
        let n = 20_000;
        for _ in 0..n {
            counts[p.inner().draw_scenario(&mut src)] += 1;
        }
        let freq = counts[1] as f64 / n as f64;
        assert!((freq - 0.75).abs() < 0.02, "scenario-2 frequency {freq}");
    }
}
