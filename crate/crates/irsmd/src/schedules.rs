//! Coupled stepsize/regularization schedules γ_k = γ₀/(k+1)^a,
//! λ_k = λ₀/(k+1)^b and the averaging exponent r < 1.
//!
//! Two validators cover the two power-law regimes the solver's guarantees
//! rest on:
//!
//! * [`Schedule::convergence_report`] — `a, b > 0`, `a > b`, `a > 0.5`,
//!   `a + b < 1`: sufficient for almost-sure convergence of the averaged
//!   iterate.
//! * [`Schedule::bound_diagnostic_report`] — `a, b > 0`, `a > b`,
//!   `a + b < 1`, `3a + b < 2`: sufficient for the recursive error bound
//!   used by the runtime diagnostic in [`crate::reference`].
//!
//! The rate schedule `a = 0.5 + 0.5δ`, `b = 0.5 − δ` always passes the first
//! validator and always fails the second (3a + b = 2 + 0.5δ ≥ 2), so the
//! bound diagnostic does not apply to it; both regimes are exposed and the
//! choice is left to the caller.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("gamma0 and lambda0 must be positive")]
    NonPositiveInitial,
    #[error("averaging exponent r must satisfy r < 1, got {0}")]
    InvalidAveragingExponent(f64),
    #[error("rate exponent delta must lie in (0, 0.5), got {0}")]
    DeltaOutOfRange(f64),
}

/// One checked inequality with its literal rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCheck {
    pub condition: String,
    pub passed: bool,
}

/// Outcome of a validator; `passed` is the conjunction of all flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub conditions: Vec<ConditionCheck>,
    pub passed: bool,
}

impl ValidationReport {
    fn from_conditions(conditions: Vec<ConditionCheck>) -> Self {
        let passed = conditions.iter().all(|c| c.passed);
        Self { conditions, passed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    gamma0: f64,
    lambda0: f64,
    a: f64,
    b: f64,
    r: f64,
    convergence: ValidationReport,
    bound_diagnostic: ValidationReport,
}

impl Schedule {
    pub fn new(gamma0: f64, lambda0: f64, a: f64, b: f64, r: f64) -> Result<Self, ScheduleError> {
        if gamma0.is_nan() || gamma0 <= 0.0 || lambda0.is_nan() || lambda0 <= 0.0 {
            return Err(ScheduleError::NonPositiveInitial);
        }
        if r.is_nan() || r >= 1.0 {
            return Err(ScheduleError::InvalidAveragingExponent(r));
        }
        let convergence = validate_convergence(a, b);
        let bound_diagnostic = validate_bound_diagnostic(a, b);
        Ok(Self { gamma0, lambda0, a, b, r, convergence, bound_diagnostic })
    }

    /// Schedule attaining the O(1/N^{0.5−δ}) rate: a = 0.5 + 0.5δ,
    /// b = 0.5 − δ for δ ∈ (0, 0.5).
    pub fn with_rate_exponent(
        delta: f64,
        gamma0: f64,
        lambda0: f64,
        r: f64,
    ) -> Result<Self, ScheduleError> {
        if delta.is_nan() || delta <= 0.0 || delta >= 0.5 {
            return Err(ScheduleError::DeltaOutOfRange(delta));
        }
        Self::new(gamma0, lambda0, 0.5 + 0.5 * delta, 0.5 - delta, r)
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn exponent_a(&self) -> f64 {
        self.a
    }

    pub fn exponent_b(&self) -> f64 {
        self.b
    }

    pub fn averaging_exponent(&self) -> f64 {
        self.r
    }

    /// γ_k = γ₀/(k+1)^a.
    pub fn gamma_at(&self, k: u64) -> f64 {
        self.gamma0 * ((k + 1) as f64).powf(-self.a)
    }

    /// λ_k = λ₀/(k+1)^b.
    pub fn lambda_at(&self, k: u64) -> f64 {
        self.lambda0 * ((k + 1) as f64).powf(-self.b)
    }

    /// (γ_k, λ_k).
    pub fn values_at(&self, k: u64) -> (f64, f64) {
        (self.gamma_at(k), self.lambda_at(k))
    }

    /// Averaging weight seed γ_k^r.
    pub fn weight_at(&self, k: u64) -> f64 {
        self.gamma_at(k).powf(self.r)
    }

    /// Cached report for the convergence regime (a, b > 0, a > b, a > 0.5,
    /// a + b < 1).
    pub fn convergence_report(&self) -> &ValidationReport {
        &self.convergence
    }

    /// Cached report for the recursive-bound regime (a, b > 0, a > b,
    /// a + b < 1, 3a + b < 2).
    pub fn bound_diagnostic_report(&self) -> &ValidationReport {
        &self.bound_diagnostic
    }

    /// γ₀λ₀ ≤ L_ω/μ_h (non-strict); the solver refuses to start otherwise.
    pub fn initial_product_ok(&self, grad_lipschitz: f64, mu_h: f64) -> bool {
        self.gamma0 * self.lambda0 <= grad_lipschitz / mu_h
    }

    /// Numerical probes of the raw series conditions behind the validators,
    /// evaluated by partial sums/limits up to `k_max`. The validators check
    /// the sufficient power-law inequalities; these probes let a caller
    /// inspect the underlying sums directly.
    pub fn series_diagnostics(&self, k_max: u64) -> SeriesDiagnostics {
        let k_max = k_max.max(1);
        let mut sum_gamma_lambda = 0.0;
        let mut sum_gamma_sq = 0.0;
        let mut sum_ratio_term = 0.0;
        let mut prev_lambda = self.lambda_at(0);
        for k in 0..=k_max {
            let (g, l) = self.values_at(k);
            sum_gamma_lambda += g * l;
            sum_gamma_sq += g * g;
            if k >= 1 {
                let d = prev_lambda / l - 1.0;
                sum_ratio_term += d * d / (g * l);
                prev_lambda = l;
            }
        }
        let (g_end, l_end) = self.values_at(k_max);
        let d_end = self.lambda_at(k_max - 1) / l_end - 1.0;
        SeriesDiagnostics {
            k_max,
            sum_gamma_lambda,
            sum_gamma_sq,
            sum_ratio_term,
            ratio_limit_probe: d_end * d_end / (g_end * g_end * l_end * l_end),
            step_ratio_probe: g_end / l_end,
            product_probe: g_end * l_end,
        }
    }
}

/// Partial sums / tail probes from [`Schedule::series_diagnostics`].
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesDiagnostics {
    pub k_max: u64,
    /// Σ γ_k λ_k up to k_max (should grow without bound).
    pub sum_gamma_lambda: f64,
    /// Σ γ_k² up to k_max (should stay bounded).
    pub sum_gamma_sq: f64,
    /// Σ (λ_{k−1}/λ_k − 1)²/(γ_k λ_k) up to k_max (should stay bounded).
    pub sum_ratio_term: f64,
    /// (λ_{k−1}/λ_k − 1)²/(γ_k λ_k)² at k_max (should tend to zero).
    pub ratio_limit_probe: f64,
    /// γ_k/λ_k at k_max (should tend to zero).
    pub step_ratio_probe: f64,
    /// γ_k λ_k at k_max (should tend to zero).
    pub product_probe: f64,
}

fn validate_convergence(a: f64, b: f64) -> ValidationReport {
    ValidationReport::from_conditions(vec![
        check(format!("a > 0 and b > 0 (a={a}, b={b})"), a > 0.0 && b > 0.0),
        check(format!("a > b ({a} > {b})"), a > b),
        check(format!("a > 0.5 ({a} > 0.5)"), a > 0.5),
        check(format!("a + b < 1 ({} < 1)", a + b), a + b < 1.0),
    ])
}

fn validate_bound_diagnostic(a: f64, b: f64) -> ValidationReport {
    ValidationReport::from_conditions(vec![
        check(format!("a > 0 and b > 0 (a={a}, b={b})"), a > 0.0 && b > 0.0),
        check(format!("a > b ({a} > {b})"), a > b),
        check(format!("a + b < 1 ({} < 1)", a + b), a + b < 1.0),
        check(format!("3a + b < 2 ({} < 2)", 3.0 * a + b), 3.0 * a + b < 2.0),
    ])
}

fn check(condition: String, passed: bool) -> ConditionCheck {
    ConditionCheck { condition, passed }
}
