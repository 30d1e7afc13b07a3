//! Small dense/sparse vector helpers shared across the crate.

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged matrix rows");
            data.extend_from_slice(row);
        }
        Self::new(r, c, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::new(n, n, vec![0.0; n * n]);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// out = A x
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    /// out += alpha * A^T r
    pub fn mul_transpose_vec_acc(&self, r: &[f64], alpha: f64, out: &mut [f64]) {
        debug_assert_eq!(r.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (i, ri) in r.iter().enumerate() {
            let s = alpha * ri;
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += s * a;
            }
        }
    }
}

/// Sparse vector as parallel index/value arrays; indices strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVec {
    pub fn new(dim: usize, indices: Vec<u32>, values: Vec<f64>) -> Self {
        assert_eq!(indices.len(), values.len());
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]), "indices must be sorted");
        debug_assert!(indices.iter().all(|&i| (i as usize) < dim));
        Self { dim, indices, values }
    }

    pub fn from_dense(x: &[f64]) -> Self {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 {
                indices.push(i as u32);
                values.push(v);
            }
        }
        Self::new(x.len(), indices, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| (i as usize, v))
    }

    pub fn dot_dense(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.iter().map(|(i, v)| v * x[i]).sum()
    }

    pub fn norm2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// out += alpha * self (dense accumulate)
    pub fn axpy_into(&self, alpha: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        for (i, v) in self.iter() {
            out[i] += alpha * v;
        }
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn norm2_sq(x: &[f64]) -> f64 {
    dot(x, x)
}

pub fn norm1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn dist2(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// out = x - y
pub fn sub_into(x: &[f64], y: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
        *o = a - b;
    }
}

/// out += alpha * x
pub fn axpy(alpha: f64, x: &[f64], out: &mut [f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

pub fn scale(x: &mut [f64], alpha: f64) {
    for v in x {
        *v *= alpha;
    }
}

/// Kahan compensated accumulator; keeps long weight sums tight.
#[derive(Debug, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new(initial: f64) -> Self {
        Self { sum: initial, carry: 0.0 }
    }

    pub fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_roundtrip() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let mut out = vec![0.0; 2];
        a.mul_vec_into(&[1.0, 1.0], &mut out);
        assert_eq!(out, vec![3.0, 7.0]);
        let mut back = vec![0.0; 2];
        a.mul_transpose_vec_acc(&out, 1.0, &mut back);
        assert_eq!(back, vec![24.0, 34.0]);
    }

    #[test]
    fn sparse_dot_matches_dense() {
        let s = SparseVec::from_dense(&[0.0, 2.0, 0.0, -1.0]);
        assert_eq!(s.nnz(), 2);
        assert_eq!(s.dot_dense(&[1.0, 1.0, 1.0, 3.0]), -1.0);
    }

    #[test]
    fn kahan_tracks_long_sums() {
        let mut k = KahanSum::new(0.0);
        for _ in 0..1_000_000 {
            k.add(0.1);
        }
        assert!((k.value() - 100_000.0).abs() < 1e-9);
    }
}
