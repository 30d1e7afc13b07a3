//! Elastic-net outer objective h(x) = (μ_h/2)‖x‖₂² + ‖x‖₁, deterministic and
//! strongly convex with modulus μ_h. Subgradient selection uses sign(0) ≜ 0.

use super::{FirstOrderOracle, OracleError};
use crate::geometry::FeasibleSet;
use crate::linalg::{norm1, norm2_sq};

#[derive(Debug, Clone)]
pub struct ElasticNetOracle {
    mu: f64,
    dim: usize,
}

impl ElasticNetOracle {
    pub fn new(mu: f64, dim: usize) -> Result<Self, OracleError> {
        if mu.is_nan() || mu <= 0.0 {
            return Err(OracleError::Invalid("elastic net requires mu_h > 0".into()));
        }
        Ok(Self { mu, dim })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

impl FirstOrderOracle for ElasticNetOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn scenario_count(&self) -> usize {
        1
    }

    fn scenario_value(&self, x: &[f64], _i: usize) -> f64 {
        0.5 * self.mu * norm2_sq(x) + norm1(x)
    }

    fn scenario_subgrad_into(&self, x: &[f64], _i: usize, out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = self.mu * v + sign0(v);
        }
    }

    fn exact_subgrad_into(&self, x: &[f64], out: &mut [f64]) {
        self.scenario_subgrad_into(x, 0, out);
    }

    fn subgrad_norm_bound(&self, set: &FeasibleSet) -> Option<f64> {
        match set {
            // Componentwise: sup |mu x_i + sign(x_i)| <= mu max(|l|,|u|) + 1.
            FeasibleSet::Box { lower, upper } => Some(
                lower
                    .iter()
                    .zip(upper)
                    .map(|(l, u)| {
                        let c = self.mu * l.abs().max(u.abs()) + 1.0;
                        c * c
                    })
                    .sum::<f64>()
                    .sqrt(),
            ),
            _ => {
                let m = set.diameter_bound()?;
                Some(self.mu * m + (self.dim as f64).sqrt())
            }
        }
    }

    fn value_bound(&self, set: &FeasibleSet) -> Option<f64> {
        match set {
            FeasibleSet::Box { lower, upper } => Some(
                lower
                    .iter()
                    .zip(upper)
                    .map(|(l, u)| {
                        let m = l.abs().max(u.abs());
                        0.5 * self.mu * m * m + m
                    })
                    .sum(),
            ),
            _ => {
                let m = set.diameter_bound()?;
                Some(0.5 * self.mu * m * m + (self.dim as f64).sqrt() * m)
            }
        }
    }

    fn strong_convexity(&self) -> f64 {
        self.mu
    }
}

fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
