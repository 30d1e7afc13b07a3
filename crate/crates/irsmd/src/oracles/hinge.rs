//! Hinge-loss classification objective f(x) = (1/N) Σ max{0, 1 − b_i⟨x, a_i⟩}
//! over sparse examples with labels in {−1, +1}.
//!
//! Subgradient selection at the kink: a scenario whose margin term
//! 1 − b⟨x, a⟩ is exactly 0 contributes the zero subgradient.

use super::{FirstOrderOracle, OracleError};
use crate::geometry::FeasibleSet;
use crate::linalg::SparseVec;

#[derive(Debug, Clone)]
pub struct HingeOracle {
    examples: Vec<SparseVec>,
    labels: Vec<f64>,
    dim: usize,
    max_feature_norm: f64,
}

impl HingeOracle {
    pub fn new(data: Vec<(SparseVec, f64)>) -> Result<Self, OracleError> {
        if data.is_empty() {
            return Err(OracleError::EmptyData);
        }
        let dim = data[0].0.dim();
        let mut examples = Vec::with_capacity(data.len());
        let mut labels = Vec::with_capacity(data.len());
        let mut max_norm: f64 = 0.0;
        for (a, b) in data {
            if a.dim() != dim {
                return Err(OracleError::DimensionMismatch { expected: dim, got: a.dim() });
            }
            if b != 1.0 && b != -1.0 {
                return Err(OracleError::InvalidLabel(b));
            }
            max_norm = max_norm.max(a.norm2());
            examples.push(a);
            labels.push(b);
        }
        Ok(Self { examples, labels, dim, max_feature_norm: max_norm })
    }

    pub fn example(&self, i: usize) -> (&SparseVec, f64) {
        (&self.examples[i], self.labels[i])
    }

    fn margin_term(&self, x: &[f64], i: usize) -> f64 {
        1.0 - self.labels[i] * self.examples[i].dot_dense(x)
    }
}

impl FirstOrderOracle for HingeOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn scenario_count(&self) -> usize {
        self.examples.len()
    }

    fn scenario_value(&self, x: &[f64], i: usize) -> f64 {
        self.margin_term(x, i).max(0.0)
    }

    fn scenario_subgrad_into(&self, x: &[f64], i: usize, out: &mut [f64]) {
        out.fill(0.0);
        if self.margin_term(x, i) > 0.0 {
            self.examples[i].axpy_into(-self.labels[i], out);
        }
    }

    fn exact_subgrad_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let w = 1.0 / self.examples.len() as f64;
        for i in 0..self.examples.len() {
            if self.margin_term(x, i) > 0.0 {
                self.examples[i].axpy_into(-w * self.labels[i], out);
            }
        }
    }

    /// Every subgradient is 0 or −b_i a_i, so C_F = max_i ‖a_i‖₂ holds on any
    /// set, including the whole space.
    fn subgrad_norm_bound(&self, _set: &FeasibleSet) -> Option<f64> {
        Some(self.max_feature_norm)
    }

    fn value_bound(&self, set: &FeasibleSet) -> Option<f64> {
        set.diameter_bound().map(|m| 1.0 + self.max_feature_norm * m)
    }
}
