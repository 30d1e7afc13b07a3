//! Least-squares inner objective f(x) = ‖Ax − b‖₂² with row sampling.
//!
//! Scenario i carries F(x, ξ_i) = m (a_i^T x − b_i)², where m is the number
//! of rows; the scaling makes the uniform scenario average equal to
//! ‖Ax − b‖² exactly, so sampled subgradients are unbiased for the full
//! gradient.

use super::FirstOrderOracle;
use super::OracleError;
use crate::geometry::FeasibleSet;
use crate::linalg::{dot, norm2, DenseMatrix};

#[derive(Debug, Clone)]
pub struct LeastSquaresOracle {
    matrix: DenseMatrix,
    rhs: Vec<f64>,
}

impl LeastSquaresOracle {
    pub fn new(matrix: DenseMatrix, rhs: Vec<f64>) -> Result<Self, OracleError> {
        if matrix.rows() == 0 || matrix.cols() == 0 {
            return Err(OracleError::EmptyData);
        }
        if rhs.len() != matrix.rows() {
            return Err(OracleError::ShapeMismatch(format!(
                "matrix has {} rows but rhs has length {}",
                matrix.rows(),
                rhs.len()
            )));
        }
        Ok(Self { matrix, rhs })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    fn residual(&self, x: &[f64], i: usize) -> f64 {
        dot(self.matrix.row(i), x) - self.rhs[i]
    }

    /// sup_{x in set} |a^T x - b| for one row, when the set is bounded.
    fn row_residual_bound(&self, i: usize, set: &FeasibleSet) -> Option<f64> {
        let a = self.matrix.row(i);
        let b = self.rhs[i];
        match set {
            FeasibleSet::WholeSpace { .. } => None,
            FeasibleSet::Box { lower, upper } => {
                let mut lo = 0.0;
                let mut hi = 0.0;
                for ((&c, &l), &u) in a.iter().zip(lower).zip(upper) {
                    lo += (c * l).min(c * u);
                    hi += (c * l).max(c * u);
                }
                Some((lo - b).abs().max((hi - b).abs()))
            }
            FeasibleSet::Ball { center, radius } => {
                Some((dot(a, center) - b).abs() + radius * norm2(a))
            }
        }
    }
}

impl FirstOrderOracle for LeastSquaresOracle {
    fn dim(&self) -> usize {
        self.matrix.cols()
    }

    fn scenario_count(&self) -> usize {
        self.matrix.rows()
    }

    fn scenario_value(&self, x: &[f64], i: usize) -> f64 {
        let r = self.residual(x, i);
        self.matrix.rows() as f64 * r * r
    }

    fn scenario_subgrad_into(&self, x: &[f64], i: usize, out: &mut [f64]) {
        let s = 2.0 * self.matrix.rows() as f64 * self.residual(x, i);
        for (o, a) in out.iter_mut().zip(self.matrix.row(i)) {
            *o = s * a;
        }
    }

    fn exact_value(&self, x: &[f64]) -> f64 {
        (0..self.matrix.rows())
            .map(|i| {
                let r = self.residual(x, i);
                r * r
            })
            .sum()
    }

    // 2 A^T (Ax - b); algebraically the scenario average but computed via the
    // residual route, which keeps the unbiasedness check meaningful.
    fn exact_subgrad_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.matrix.rows() {
            let s = 2.0 * self.residual(x, i);
            for (o, a) in out.iter_mut().zip(self.matrix.row(i)) {
                *o += s * a;
            }
        }
    }

    fn subgrad_norm_bound(&self, set: &FeasibleSet) -> Option<f64> {
        let m = self.matrix.rows() as f64;
        let mut best: f64 = 0.0;
        for i in 0..self.matrix.rows() {
            let r = self.row_residual_bound(i, set)?;
            best = best.max(2.0 * m * r * norm2(self.matrix.row(i)));
        }
        Some(best)
    }

    fn value_bound(&self, set: &FeasibleSet) -> Option<f64> {
        let mut sum = 0.0;
        for i in 0..self.matrix.rows() {
            let r = self.row_residual_bound(i, set)?;
            sum += r * r;
        }
        Some(sum)
    }

    fn as_least_squares(&self) -> Option<&LeastSquaresOracle> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::SampleSource;

    #[test]
    fn consistent_system_has_zero_value() {
        let o = LeastSquaresOracle::new(DenseMatrix::identity(2), vec![1.0, 1.0]).unwrap();
        assert_eq!(o.exact_value(&[1.0, 1.0]), 0.0);
    }

    #[test]
    fn rank_deficient_toy_minimum() {
        // f(x) = (x1-1)^2 + (x1+1)^2, minimized at x1 = 0 with f* = 2.
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        let o = LeastSquaresOracle::new(a, vec![1.0, -1.0]).unwrap();
        assert_eq!(o.exact_value(&[0.0, 5.0]), 2.0);
        assert!(o.exact_value(&[0.1, 0.0]) > 2.0);
    }

    #[test]
    fn scenario_subgrad_matches_formula() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0], vec![3.0, 0.0]]);
        let o = LeastSquaresOracle::new(a, vec![1.0, 0.0, 2.0]).unwrap();
        let x = [0.5, -0.5];
        let mut g = vec![0.0; 2];
        // row 0: residual = 0.5 - 1.0 - 1.0 = -1.5; g = 2*3*(-1.5)*(1,2).
        o.scenario_subgrad_into(&x, 0, &mut g);
        assert_eq!(g, vec![-9.0, -18.0]);
    }

    #[test]
    fn scenario_average_is_exact_gradient() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0], vec![3.0, 0.0]]);
        let o = LeastSquaresOracle::new(a, vec![1.0, 0.0, 2.0]).unwrap();
        let x = [0.37, -1.2];
        let mut avg = [0.0; 2];
        let mut tmp = vec![0.0; 2];
        for i in 0..o.scenario_count() {
            o.scenario_subgrad_into(&x, i, &mut tmp);
            for (s, t) in avg.iter_mut().zip(&tmp) {
                *s += t / o.scenario_count() as f64;
            }
        }
        let mut exact = vec![0.0; 2];
        o.exact_subgrad_into(&x, &mut exact);
        for (s, e) in avg.iter().zip(&exact) {
            assert!((s - e).abs() < 1e-12);
        }
        // Value route agrees with the scenario average too.
        let mean: f64 = (0..3).map(|i| o.scenario_value(&x, i) / 3.0).sum();
        assert!((mean - o.exact_value(&x)).abs() < 1e-10);
    }

    #[test]
    fn bounds_certify_on_boxes() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 0.0]]);
        let o = LeastSquaresOracle::new(a, vec![0.0, 1.0]).unwrap();
        let set = FeasibleSet::symmetric_box(2, -1.0, 1.0).unwrap();
        let c = o.subgrad_norm_bound(&set).unwrap();
        // Empirical max never exceeds the certificate.
        let mut src = SampleSource::from_seed(3);
        let mut g = vec![0.0; 2];
        for _ in 0..10_000 {
            let x = [src.unit() * 2.0 - 1.0, src.unit() * 2.0 - 1.0];
            for i in 0..2 {
                o.scenario_subgrad_into(&x, i, &mut g);
                assert!(norm2(&g) <= c);
            }
        }
        assert_eq!(o.subgrad_norm_bound(&FeasibleSet::whole_space(2)), None);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let err = LeastSquaresOracle::new(DenseMatrix::identity(2), vec![1.0]);
        assert!(matches!(err, Err(OracleError::ShapeMismatch(_))));
    }
}
