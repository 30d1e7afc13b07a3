//! Stochastic first-order oracles for the inner objective f = E[F(·, ξ)] and
//! the outer objective h = E[H(·, ξ)].
//!
//! Every built-in oracle has finite support: a set of scenarios with
//! probabilities. Sampling draws a scenario and returns one subgradient of
//! the corresponding integrand; the deterministic path enumerates the full
//! support. Unbiasedness (the scenario-weighted average of sampled
//! subgradients equals the deterministic subgradient) holds exactly because
//! kink tie-breaking is fixed once and for all:
//!
//! * `sign(0) ≜ 0` for ℓ₁ terms;
//! * a `max{0, ·}` branch contributes a zero subgradient when its argument is
//!   exactly 0.

mod elastic_net;
mod hinge;
mod least_squares;
mod quadratic;

pub use elastic_net::ElasticNetOracle;
pub use hinge::HingeOracle;
pub use least_squares::LeastSquaresOracle;
pub use quadratic::QuadraticOracle;

use crate::geometry::FeasibleSet;
use crate::linalg::axpy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("labels must be -1 or +1, got {0}")]
    InvalidLabel(f64),
    #[error("empty data set")]
    EmptyData,
    #[error("outer objective must be strongly convex (modulus > 0)")]
    NotStronglyConvex,
    #[error("{0}")]
    Invalid(String),
}

/// Seeded pseudo-random scenario stream. One stream drives both the inner
/// and outer draws of a sample path (two draws per iteration), so a fixed
/// seed reproduces the exact subgradient sequence bit for bit.
#[derive(Debug, Clone)]
pub struct SampleSource {
    rng: ChaCha8Rng,
    seed: u64,
    draws: u64,
}

impl SampleSource {
    pub fn from_seed(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), seed, draws: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.draws += 1;
        self.rng.random_range(0..n)
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.draws += 1;
        self.rng.random::<f64>()
    }
}

/// A convex objective given as a finite-support expectation, with sampling
/// and deterministic (full-pass) first-order access.
pub trait FirstOrderOracle: Send + Sync {
    fn dim(&self) -> usize;

    /// Size of the finite support (1 for deterministic objectives).
    fn scenario_count(&self) -> usize;

    /// Probability of scenario `i`; uniform unless overridden.
    fn scenario_weight(&self, _i: usize) -> f64 {
        1.0 / self.scenario_count() as f64
    }

    /// Integrand value F(x, ξ_i).
    fn scenario_value(&self, x: &[f64], i: usize) -> f64;

    /// One subgradient of F(·, ξ_i) at x, written into `out`.
    fn scenario_subgrad_into(&self, x: &[f64], i: usize, out: &mut [f64]);

    /// Draw a scenario index according to the scenario weights.
    fn draw_scenario(&self, src: &mut SampleSource) -> usize {
        src.index(self.scenario_count())
    }

    /// Exact expectation: full pass over the support.
    fn exact_value(&self, x: &[f64]) -> f64 {
        (0..self.scenario_count())
            .map(|i| self.scenario_weight(i) * self.scenario_value(x, i))
            .sum()
    }

    /// Exact subgradient of the expectation (scenario-weighted average).
    fn exact_subgrad_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut tmp = vec![0.0; self.dim()];
        for i in 0..self.scenario_count() {
            self.scenario_subgrad_into(x, i, &mut tmp);
            axpy(self.scenario_weight(i), &tmp, out);
        }
    }

    /// Certified bound on the dual norm of every sampled subgradient over
    /// `set`, or `None` when no bound can be certified (e.g. unbounded sets).
    fn subgrad_norm_bound(&self, _set: &FeasibleSet) -> Option<f64> {
        None
    }

    /// Certified bound on |exact_value| over `set`, when available.
    fn value_bound(&self, _set: &FeasibleSet) -> Option<f64> {
        None
    }

    /// Strong-convexity modulus of the expectation in ℓ₂ (0 if merely convex).
    fn strong_convexity(&self) -> f64 {
        0.0
    }

    /// Concrete access for the least-squares cross-check route in
    /// [`crate::reference`].
    fn as_least_squares(&self) -> Option<&LeastSquaresOracle> {
        None
    }
}

/// Paired inner/outer oracles over a common feasible set, plus the certified
/// constants the diagnostics need: C_F, C_H (dual-norm subgradient bounds),
/// μ_h (strong convexity of h), and M_h (bound on |h| over X). Bounds are
/// `None` when they cannot be certified, and diagnostics depending on them
/// are disabled in that case.
#[derive(Clone)]
pub struct BilevelProblem {
    inner: Arc<dyn FirstOrderOracle>,
    outer: Arc<dyn FirstOrderOracle>,
    set: FeasibleSet,
    mu_h: f64,
    deterministic: bool,
    c_f: Option<f64>,
    c_h: Option<f64>,
    m_h: Option<f64>,
}

impl BilevelProblem {
    pub fn new(
        inner: Arc<dyn FirstOrderOracle>,
        outer: Arc<dyn FirstOrderOracle>,
        set: FeasibleSet,
    ) -> Result<Self, OracleError> {
        if inner.dim() != set.dim() {
            return Err(OracleError::DimensionMismatch { expected: set.dim(), got: inner.dim() });
        }
        if outer.dim() != set.dim() {
            return Err(OracleError::DimensionMismatch { expected: set.dim(), got: outer.dim() });
        }
        let mu_h = outer.strong_convexity();
        if mu_h.is_nan() || mu_h <= 0.0 {
            return Err(OracleError::NotStronglyConvex);
        }
        let c_f = inner.subgrad_norm_bound(&set);
        let c_h = outer.subgrad_norm_bound(&set);
        let m_h = outer.value_bound(&set);
        Ok(Self { inner, outer, set, mu_h, deterministic: false, c_f, c_h, m_h })
    }

    /// Switch the problem to deterministic mode: sampling calls return the
    /// exact full-pass subgradients and consume no randomness.
    pub fn deterministic(mut self, on: bool) -> Self {
        self.deterministic = on;
        self
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn set(&self) -> &FeasibleSet {
        &self.set
    }

    /// Rebind the same oracles to a different feasible set (bounds are
    /// recertified).
    pub fn with_set(&self, set: FeasibleSet) -> Result<Self, OracleError> {
        let mut p = Self::new(self.inner.clone(), self.outer.clone(), set)?;
        p.deterministic = self.deterministic;
        Ok(p)
    }

    pub fn inner(&self) -> &Arc<dyn FirstOrderOracle> {
        &self.inner
    }

    pub fn outer(&self) -> &Arc<dyn FirstOrderOracle> {
        &self.outer
    }

    pub fn mu_h(&self) -> f64 {
        self.mu_h
    }

    /// Certified C_F, or `None` when unverified on this set.
    pub fn c_f(&self) -> Option<f64> {
        self.c_f
    }

    pub fn c_h(&self) -> Option<f64> {
        self.c_h
    }

    pub fn m_h(&self) -> Option<f64> {
        self.m_h
    }

    pub fn exact_f(&self, x: &[f64]) -> f64 {
        self.inner.exact_value(x)
    }

    pub fn exact_h(&self, x: &[f64]) -> f64 {
        self.outer.exact_value(x)
    }

    pub fn exact_subgrad_f(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.inner.exact_subgrad_into(x, &mut out);
        out
    }

    pub fn exact_subgrad_h(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.outer.exact_subgrad_into(x, &mut out);
        out
    }

    /// Sampled subgradient g_F(x, ξ) for a freshly drawn ξ (or the exact
    /// g_f(x) in deterministic mode).
    pub fn sample_subgrad_f(&self, x: &[f64], src: &mut SampleSource) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_subgrad_f_into(x, src, &mut out);
        out
    }

    pub fn sample_subgrad_h(&self, x: &[f64], src: &mut SampleSource) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_subgrad_h_into(x, src, &mut out);
        out
    }

    pub fn sample_subgrad_f_into(&self, x: &[f64], src: &mut SampleSource, out: &mut [f64]) {
        if self.deterministic {
            self.inner.exact_subgrad_into(x, out);
        } else {
            let i = self.inner.draw_scenario(src);
            self.inner.scenario_subgrad_into(x, i, out);
        }
    }

    pub fn sample_subgrad_h_into(&self, x: &[f64], src: &mut SampleSource, out: &mut [f64]) {
        if self.deterministic {
            self.outer.exact_subgrad_into(x, out);
        } else {
            let i = self.outer.draw_scenario(src);
            self.outer.scenario_subgrad_into(x, i, out);
        }
    }
}

impl std::fmt::Debug for BilevelProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BilevelProblem")
            .field("dim", &self.dim())
            .field("set", &self.set)
            .field("mu_h", &self.mu_h)
            .field("deterministic", &self.deterministic)
            .field("c_f", &self.c_f)
            .field("c_h", &self.c_h)
            .field("m_h", &self.m_h)
            .finish()
    }
}
