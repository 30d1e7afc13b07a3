//! Deterministic diagonal convex quadratic ½⟨x, q∘x⟩ + ⟨w, x⟩ + c, usable as
//! either level of a toy problem. Strong-convexity modulus is min_i q_i.

use super::{FirstOrderOracle, OracleError};
use crate::geometry::FeasibleSet;
use crate::linalg::{dot, norm2};

#[derive(Debug, Clone)]
pub struct QuadraticOracle {
    quad: Vec<f64>,
    linear: Vec<f64>,
    offset: f64,
}

impl QuadraticOracle {
    pub fn new(quad: Vec<f64>, linear: Vec<f64>, offset: f64) -> Result<Self, OracleError> {
        if quad.len() != linear.len() {
            return Err(OracleError::DimensionMismatch {
                expected: quad.len(),
                got: linear.len(),
            });
        }
        if quad.iter().any(|&q| q < 0.0) {
            return Err(OracleError::Invalid("quadratic coefficients must be >= 0".into()));
        }
        Ok(Self { quad, linear, offset })
    }

    /// Isotropic ½μ‖x − center‖² (plus nothing else).
    pub fn centered(mu: f64, center: &[f64]) -> Result<Self, OracleError> {
        if mu.is_nan() || mu < 0.0 {
            return Err(OracleError::Invalid("modulus must be >= 0".into()));
        }
        let quad = vec![mu; center.len()];
        let linear: Vec<f64> = center.iter().map(|c| -mu * c).collect();
        let offset = 0.5 * mu * dot(center, center);
        Self::new(quad, linear, offset)
    }
}

impl FirstOrderOracle for QuadraticOracle {
    fn dim(&self) -> usize {
        self.quad.len()
    }

    fn scenario_count(&self) -> usize {
        1
    }

    fn scenario_value(&self, x: &[f64], _i: usize) -> f64 {
        let mut v = self.offset;
        for ((&xi, &q), &w) in x.iter().zip(&self.quad).zip(&self.linear) {
            v += 0.5 * q * xi * xi + w * xi;
        }
        v
    }

    fn scenario_subgrad_into(&self, x: &[f64], _i: usize, out: &mut [f64]) {
        for (o, ((&xi, &q), &w)) in out.iter_mut().zip(x.iter().zip(&self.quad).zip(&self.linear)) {
            *o = q * xi + w;
        }
    }

    fn exact_subgrad_into(&self, x: &[f64], out: &mut [f64]) {
        self.scenario_subgrad_into(x, 0, out);
    }

    fn subgrad_norm_bound(&self, set: &FeasibleSet) -> Option<f64> {
        match set {
            FeasibleSet::WholeSpace { .. } => None,
            FeasibleSet::Box { lower, upper } => {
                let mut sum = 0.0;
                for i in 0..self.quad.len() {
                    let lo = self.quad[i] * lower[i] + self.linear[i];
                    let hi = self.quad[i] * upper[i] + self.linear[i];
                    sum += lo.abs().max(hi.abs()).powi(2);
                }
                Some(sum.sqrt())
            }
            FeasibleSet::Ball { .. } => {
                let m = set.diameter_bound()?;
                let qmax = self.quad.iter().cloned().fold(0.0, f64::max);
                Some(qmax * m + norm2(&self.linear))
            }
        }
    }

    fn value_bound(&self, set: &FeasibleSet) -> Option<f64> {
        let m = set.diameter_bound()?;
        let qmax = self.quad.iter().cloned().fold(0.0, f64::max);
        Some(0.5 * qmax * m * m + norm2(&self.linear) * m + self.offset.abs())
    }

    fn strong_convexity(&self) -> f64 {
        self.quad.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}
