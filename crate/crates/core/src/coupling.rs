//! Dense coupling matrices and the matrix-vector kernel used by the series
//! evaluations.

use std::sync::OnceLock;

use crate::error::{domain, Result};

/// Row-major `n x n` coupling matrix `J`.
///
/// The dynamics use `J / sqrt(n)`; the scale factor is applied by callers.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    n: usize,
    data: Vec<f64>,
    norm_estimate: OnceLock<f64>,
}

impl PartialEq for CouplingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.data == other.data
    }
}

impl CouplingMatrix {
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return domain("coupling matrix must be at least 1x1");
        }
        if data.len() != n * n {
            return domain(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            ));
        }
        Ok(Self { n, data, norm_estimate: OnceLock::new() })
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n], norm_estimate: OnceLock::new() }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data, norm_estimate: OnceLock::new() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `out = scale * J v`.
    pub fn matvec_scaled(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.n)) {
            *o = scale * dot(row, v);
        }
    }

    /// `out = scale * J^T v`.
    pub fn matvec_transpose_scaled(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (row, &vi) in self.data.chunks_exact(self.n).zip(v) {
            let s = scale * vi;
            for (o, &r) in out.iter_mut().zip(row) {
                *o += s * r;
            }
        }
    }

    /// Spectral-norm estimate from 20 power iterations on `J^T J`.
    ///
    /// Cached after the first call. Only used to size the hard cap on the
    /// number of series terms.
    pub fn norm_estimate(&self) -> f64 {
        *self.norm_estimate.get_or_init(|| power_norm(self, 20))
    }
}

fn power_norm(j: &CouplingMatrix, iterations: usize) -> f64 {
    let n = j.dim();
    // deterministic, non-degenerate start vector
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.618_033_988_75).fract()).collect();
    let mut y = vec![0.0; n];
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let nx = norm(&x);
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        j.matvec_scaled(&x, 1.0, &mut y);
        estimate = norm(&y);
        j.matvec_transpose_scaled(&y, 1.0, &mut x);
    }
    estimate
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
