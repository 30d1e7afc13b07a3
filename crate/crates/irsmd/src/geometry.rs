//! Bregman geometry: distance-generating functions, prox mappings, and
//! feasible-set projections.
//!
//! A distance-generating function `ω` is smooth and strongly convex with
//! modulus `μ_ω` and gradient-Lipschitz modulus `L_ω`. It induces the Bregman
//! distance `D(x, y) = ω(y) − ω(x) − ⟨∇ω(x), y − x⟩` and the prox mapping
//! `P_X(x, y) = argmin_{z ∈ X} { ⟨y, z⟩ + D(x, z) }`, the update primitive of
//! mirror descent. Only the Euclidean generator `ω(x) = ½‖x‖₂²` ships; the
//! enum is open so entropy-type generators can be added without touching the
//! solver.

use crate::linalg::{norm2, norm2_sq, sub_into};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("prox base point lies outside the feasible set (caller bug)")]
    PointOutsideSet,
    #[error("invalid feasible set: {0}")]
    InvalidSet(String),
}

/// Which distance-generating function to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[non_exhaustive]
pub enum GeneratorKind {
    /// ω(x) = ½‖x‖₂², with μ_ω = L_ω = 1 and ℓ₂ as both primal and dual norm.
    EuclideanHalfSquare,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceGenerator {
    kind: GeneratorKind,
}

impl DistanceGenerator {
    pub fn euclidean() -> Self {
        Self { kind: GeneratorKind::EuclideanHalfSquare }
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    /// Strong-convexity modulus μ_ω of ω.
    pub fn strong_convexity(&self) -> f64 {
        match self.kind {
            GeneratorKind::EuclideanHalfSquare => 1.0,
        }
    }

    /// Gradient-Lipschitz modulus L_ω of ω (≥ μ_ω).
    pub fn grad_lipschitz(&self) -> f64 {
        match self.kind {
            GeneratorKind::EuclideanHalfSquare => 1.0,
        }
    }

    /// ω(x).
    pub fn omega_value(&self, x: &[f64]) -> f64 {
        match self.kind {
            GeneratorKind::EuclideanHalfSquare => 0.5 * norm2_sq(x),
        }
    }

    /// ∇ω(x).
    pub fn omega_grad(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            GeneratorKind::EuclideanHalfSquare => x.to_vec(),
        }
    }

    /// Norm the generator is strongly convex with respect to.
    pub fn primal_norm(&self, x: &[f64]) -> f64 {
        match self.kind {
            GeneratorKind::EuclideanHalfSquare => norm2(x),
        }
    }

    /// Dual of [`Self::primal_norm`]; subgradient bounds live here.
    pub fn dual_norm(&self, g: &[f64]) -> f64 {
        match self.kind {
            GeneratorKind::EuclideanHalfSquare => norm2(g),
        }
    }

    /// Bregman distance D(x, y) = ω(y) − ω(x) − ⟨∇ω(x), y − x⟩ ≥ 0.
    pub fn bregman_distance(&self, x: &[f64], y: &[f64]) -> Result<f64, GeometryError> {
        check_dims(x.len(), y.len())?;
        Ok(match self.kind {
            GeneratorKind::EuclideanHalfSquare => {
                0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            }
        })
    }

    /// Prox mapping z* = argmin_{z ∈ set} { ⟨y, z⟩ + D(x, z) }.
    ///
    /// `x` must already be feasible. For the Euclidean generator this is the
    /// projected step `project(set, x − y)`.
    pub fn prox_map(
        &self,
        set: &FeasibleSet,
        x: &[f64],
        y: &[f64],
    ) -> Result<Vec<f64>, GeometryError> {
        check_dims(x.len(), y.len())?;
        check_dims(set.dim(), x.len())?;
        if !set.contains(x, FEASIBILITY_TOL) {
            return Err(GeometryError::PointOutsideSet);
        }
        let mut out = vec![0.0; x.len()];
        self.prox_map_into(set, x, y, &mut out);
        Ok(out)
    }

    /// Unchecked hot-path variant of [`Self::prox_map`].
    pub(crate) fn prox_map_into(&self, set: &FeasibleSet, x: &[f64], y: &[f64], out: &mut [f64]) {
        match self.kind {
            GeneratorKind::EuclideanHalfSquare => {
                sub_into(x, y, out);
                set.project_in_place(out);
            }
        }
    }
}

/// Feasibility tolerance for membership checks (absolute, per constraint).
const FEASIBILITY_TOL: f64 = 1e-9;

/// The constraint set X. Closed convex; compact except for `WholeSpace`.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    WholeSpace { dim: usize },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl FeasibleSet {
    pub fn whole_space(dim: usize) -> Self {
        FeasibleSet::WholeSpace { dim }
    }

    pub fn bounded_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, GeometryError> {
        check_dims(lower.len(), upper.len())?;
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(GeometryError::InvalidSet("box requires lower <= upper".into()));
        }
        Ok(FeasibleSet::Box { lower, upper })
    }

    /// Box [lo, hi]^dim.
    pub fn symmetric_box(dim: usize, lo: f64, hi: f64) -> Result<Self, GeometryError> {
        Self::bounded_box(vec![lo; dim], vec![hi; dim])
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self, GeometryError> {
        if radius.is_nan() || radius <= 0.0 {
            return Err(GeometryError::InvalidSet("ball radius must be positive".into()));
        }
        Ok(FeasibleSet::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::WholeSpace { dim } => *dim,
            FeasibleSet::Box { lower, .. } => lower.len(),
            FeasibleSet::Ball { center, .. } => center.len(),
        }
    }

    pub fn is_compact(&self) -> bool {
        !matches!(self, FeasibleSet::WholeSpace { .. })
    }

    /// M = sup_{x ∈ X} ‖x‖₂, when the set is bounded.
    pub fn diameter_bound(&self) -> Option<f64> {
        match self {
            FeasibleSet::WholeSpace { .. } => None,
            FeasibleSet::Box { lower, upper } => Some(
                lower
                    .iter()
                    .zip(upper)
                    .map(|(l, u)| l.abs().max(u.abs()).powi(2))
                    .sum::<f64>()
                    .sqrt(),
            ),
            FeasibleSet::Ball { center, radius } => Some(norm2(center) + radius),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            FeasibleSet::WholeSpace { .. } => true,
            FeasibleSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
            FeasibleSet::Ball { center, radius } => {
                let d: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>()
                    .sqrt();
                d <= radius + tol
            }
        }
    }

    /// Nearest point of the set in ℓ₂. Componentwise clip for boxes, radial
    /// rescale for balls, identity on the whole space.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        check_dims(self.dim(), x.len())?;
        let mut out = x.to_vec();
        self.project_in_place(&mut out);
        Ok(out)
    }

    pub(crate) fn project_in_place(&self, x: &mut [f64]) {
        match self {
            FeasibleSet::WholeSpace { .. } => {}
            FeasibleSet::Box { lower, upper } => {
                for ((v, l), u) in x.iter_mut().zip(lower).zip(upper) {
                    *v = v.clamp(*l, *u);
                }
            }
            FeasibleSet::Ball { center, radius } => {
                let d: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>()
                    .sqrt();
                if d > *radius {
                    let s = radius / d;
                    for (v, c) in x.iter_mut().zip(center) {
                        *v = c + s * (*v - c);
                    }
                }
            }
        }
    }
}

fn check_dims(expected: usize, got: usize) -> Result<(), GeometryError> {
    if expected == got {
        Ok(())
    } else {
        Err(GeometryError::DimensionMismatch { expected, got })
    }
}
