//! Minimal dense matrix helpers for the desk-scale solvers: row-major
//! matrices, LU solves, Gram-Schmidt orthonormalization, and power
//! iteration. Dimensions here are tiny (tens), so clarity wins over
//! blocking or cache optimizations.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn randn<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect(),
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn scale_in_place(&mut self, f: f64) {
        for v in &mut self.data {
            *v *= f;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            out[r] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        out
    }

    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * x[r];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * out.cols + c] += a * other.get(k, c);
                }
            }
        }
        out
    }

    /// Column-orthonormalize in place with two passes of modified
    /// Gram-Schmidt. Requires cols <= rows and full column rank (random
    /// Gaussian input has it almost surely).
    pub fn orthonormalize_columns(&mut self) -> Result<()> {
        if self.cols > self.rows {
            return Err(Error::InvalidArgument(alloc::format!(
                "cannot orthonormalize {} columns in dimension {}",
                self.cols,
                self.rows
            )));
        }
        for _pass in 0..2 {
            for c in 0..self.cols {
                for prev in 0..c {
                    let mut dot = 0.0;
                    for r in 0..self.rows {
                        dot += self.get(r, c) * self.get(r, prev);
                    }
                    for r in 0..self.rows {
                        let v = self.get(r, c) - dot * self.get(r, prev);
                        self.set(r, c, v);
                    }
                }
                let mut norm_sq = 0.0;
                for r in 0..self.rows {
                    norm_sq += self.get(r, c) * self.get(r, c);
                }
                if norm_sq < 1e-24 {
                    return Err(Error::SingularSystem);
                }
                let inv = 1.0 / libm::sqrt(norm_sq);
                for r in 0..self.rows {
                    self.set(r, c, self.get(r, c) * inv);
                }
            }
        }
        Ok(())
    }
}

/// Solve A x = b with partial-pivot LU. A is consumed as a working copy.
pub(crate) fn solve(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows;
    debug_assert_eq!(a.cols, n);
    debug_assert_eq!(b.len(), n);
    let mut m = a.data.clone();
    let mut x: Vec<f64> = b.to_vec();
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(1.0);
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot = m[col * n + col].abs();
        for r in col + 1..n {
            let v = m[r * n + col].abs();
            if v > pivot {
                pivot = v;
                pivot_row = r;
            }
        }
        if pivot < 1e-13 * scale {
            return Err(Error::SingularSystem);
        }
        if pivot_row != col {
            for c in 0..n {
                m.swap(col * n + c, pivot_row * n + c);
            }
            x.swap(col, pivot_row);
        }
        let inv = 1.0 / m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] * inv;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[r * n + c] -= f * m[col * n + c];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut v = x[col];
        for c in col + 1..n {
            v -= m[col * n + c] * x[c];
        }
        x[col] = v / m[col * n + col];
    }
    Ok(x)
}

/// Spectral-norm estimate of `a` by power iteration on a^T a. Converges
/// when the estimate changes by less than `rel_tol` between iterations;
/// errors out at `max_iter`.
pub(crate) fn spectral_norm<R: Rng + ?Sized>(
    a: &Mat,
    rel_tol: f64,
    max_iter: usize,
    rng: &mut R,
) -> Result<f64> {
    if a.data.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let mut v: Vec<f64> = (0..a.cols).map(|_| rng.sample(StandardNormal)).collect();
    let mut prev = 0.0;
    for _ in 0..max_iter {
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm == 0.0 {
            return Err(Error::SingularSystem);
        }
        for x in &mut v {
            *x /= norm;
        }
        let av = a.matvec(&v);
        let sigma = libm::sqrt(av.iter().map(|x| x * x).sum::<f64>());
        if sigma == 0.0 {
            // v landed in the kernel; reseed the direction
            v = (0..a.cols).map(|_| rng.sample(StandardNormal)).collect();
            prev = 0.0;
            continue;
        }
        if (sigma - prev).abs() <= rel_tol * sigma {
            return Ok(sigma);
        }
        prev = sigma;
        v = a.matvec_t(&av);
    }
    Err(Error::PowerIterationDiverged(max_iter))
}
