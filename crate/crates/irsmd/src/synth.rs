//! Seeded synthetic problem generators: sparse separable classification data
//! (a desk-scale stand-in for large text corpora) and rank-deficient least
//! squares.

use crate::linalg::{DenseMatrix, SparseVec};
use crate::oracles::SampleSource;

/// Sparse binary classification data that is separable with margin 1: labels
/// come from a planted sparse hyperplane, and examples with |⟨w*, a⟩| < 1 are
/// rescaled onto the margin boundary's safe side. Feature values are 1.0
/// before rescaling (token-presence style).
pub fn separable_sparse_data(
    examples: usize,
    features: usize,
    sparsity: f64,
    seed: u64,
) -> Vec<(SparseVec, f64)> {
    assert!(examples > 0 && features >= 2);
    assert!(sparsity > 0.0 && sparsity <= 1.0);
    let mut src = SampleSource::from_seed(seed);
    let nnz_per_example = ((features as f64 * sparsity).round() as usize).max(1);

    // Planted hyperplane: ~10% of features carry weight ±2. Both signs are
    // always present so every label has a decisive feature available.
    let mut w_star = vec![0.0; features];
    for w in w_star.iter_mut() {
        let u = src.unit();
        if u < 0.05 {
            *w = 2.0;
        } else if u < 0.10 {
            *w = -2.0;
        }
    }
    w_star[0] = 2.0;
    w_star[1] = -2.0;

    let mut data = Vec::with_capacity(examples);
    let mut stamp = vec![false; features];
    while data.len() < examples {
        let mut indices = Vec::with_capacity(nnz_per_example);
        while indices.len() < nnz_per_example {
            let j = src.index(features);
            if !stamp[j] {
                stamp[j] = true;
                indices.push(j as u32);
            }
        }
        for &j in &indices {
            stamp[j as usize] = false;
        }
        indices.sort_unstable();
        let mut values = vec![1.0; nnz_per_example];
        let score: f64 = indices.iter().map(|&j| w_star[j as usize]).sum();
        let label = if score >= 0.0 { 1.0 } else { -1.0 };
        // Guarantee margin b<w*, a> >= 1. Mild shortfalls are fixed by a
        // bounded rescale; otherwise the weight on a decisive planted
        // feature is raised just enough, which keeps feature norms O(1).
        let margin = label * score;
        if margin < 1.0 {
            if margin >= 0.5 {
                let s = 1.0 / margin;
                for v in values.iter_mut() {
                    *v *= s;
                }
            } else {
                let j = (0..features)
                    .find(|&j| label * w_star[j] > 0.0)
                    .expect("planted hyperplane carries both signs");
                let bump = (1.0 - margin) / (label * w_star[j]);
                match indices.binary_search(&(j as u32)) {
                    Ok(pos) => values[pos] += bump,
                    Err(pos) => {
                        indices.insert(pos, j as u32);
                        values.insert(pos, bump);
                    }
                }
            }
        }
        let a = SparseVec::new(features, indices, values);
        let m = label * a.iter().map(|(j, v)| v * w_star[j]).sum::<f64>();
        if m >= 1.0 - 1e-9 {
            data.push((a, label));
        }
    }
    data
}

/// Dense least-squares data with an exactly known minimum: the matrix has
/// `rank` nonzero singular directions aligned with the first coordinates,
/// plus one repeated/contradictory row pair so the optimal residual is
/// exactly 2 in that block. Returns (A, b, f*).
pub fn rank_deficient_least_squares(cols: usize, rank: usize) -> (DenseMatrix, Vec<f64>, f64) {
    assert!(rank >= 1 && rank <= cols);
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    // Two contradictory measurements of coordinate 0: residual^2 sums to 2 at
    // the optimum x_0 = 0.
    let mut r0 = vec![0.0; cols];
    r0[0] = 1.0;
    rows.push(r0.clone());
    rhs.push(1.0);
    rows.push(r0);
    rhs.push(-1.0);
    // Consistent measurements pin coordinates 1..rank.
    for j in 1..rank {
        let mut r = vec![0.0; cols];
        r[j] = 1.0;
        rows.push(r);
        rhs.push(j as f64 + 1.0);
    }
    (DenseMatrix::from_rows(&rows), rhs, 2.0)
}
