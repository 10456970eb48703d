//! Dense matrices and a deterministic singular value decomposition.
//!
//! The decomposition is a one-sided Jacobi iteration with a fixed
//! cyclic-by-rows pair ordering and no data-dependent pivoting, so repeated
//! runs on the same input produce bit-identical factors. Everything is plain
//! `f64`; matrices are stored row-major.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

/// Errors produced by matrix construction and factorization.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,
    #[error("dimension mismatch: expected {expected} elements, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("incompatible shapes: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    ShapeMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("matrix contains a non-finite entry")]
    NonFiniteInput,
    #[error("rank {k} out of range, valid range is 1..={max}")]
    RankOutOfRange { k: usize, max: usize },
    #[error("no convergence after {sweeps} sweeps (relative off-diagonal residual {residual:.3e})")]
    NoConvergence { sweeps: usize, residual: f64 },
}

/// Dense row-major matrix of finite `f64` entries with positive dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data. Rejects empty shapes, length
    /// mismatches and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::EmptyMatrix);
        }
        let expected = rows * cols;
        if data.len() != expected {
            return Err(LinalgError::DimensionMismatch {
                expected,
                got: data.len(),
            });
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(LinalgError::NonFiniteInput);
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, LinalgError> {
        if rows.is_empty() {
            return Err(LinalgError::EmptyMatrix);
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(LinalgError::DimensionMismatch {
                    expected: cols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    /// All-zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Result<Self, LinalgError> {
        Matrix::from_vec(rows, cols, vec![0.0; rows.checked_mul(cols).unwrap_or(0)])
    }

    /// Builds a matrix from column-major data.
    pub(crate) fn from_col_major(
        rows: usize,
        cols: usize,
        col_data: &[f64],
    ) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::EmptyMatrix);
        }
        if col_data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: rows * cols,
                got: col_data.len(),
            });
        }
        let mut data = vec![0.0; rows * cols];
        for c in 0..cols {
            for r in 0..rows {
                data[r * cols + c] = col_data[c * rows + r];
            }
        }
        Matrix::from_vec(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    /// Row-major view of the entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// One row as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// One column, copied out.
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = vec![0.0; self.rows * self.cols];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.get(r, c);
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Plain matrix product.
    pub fn mul(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::ShapeMismatch {
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        let mut data = vec![0.0; self.rows * other.cols];
        for r in 0..self.rows {
            let out = &mut data[r * other.cols..(r + 1) * other.cols];
            for i in 0..self.cols {
                let f = self.get(r, i);
                let orow = other.row(i);
                for (dst, &x) in out.iter_mut().zip(orow) {
                    *dst += f * x;
                }
            }
        }
        Matrix::from_vec(self.rows, other.cols, data)
    }

    /// Largest absolute entry-wise difference between two equally shaped
    /// matrices.
    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64, LinalgError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::ShapeMismatch {
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Copy of the leading `k` columns.
    pub(crate) fn leading_columns(&self, k: usize) -> Matrix {
        debug_assert!(k >= 1 && k <= self.cols);
        let mut data = Vec::with_capacity(self.rows * k);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[..k]);
        }
        Matrix {
            rows: self.rows,
            cols: k,
            data,
        }
    }
}

/// Tuning knobs for [`svd`].
#[derive(Debug, Clone)]
pub struct SvdOptions {
    /// Columns `i`, `j` count as orthogonal once
    /// `|a_i . a_j| <= convergence_tol * |a_i| * |a_j|`.
    pub convergence_tol: f64,
    /// Sweep budget before giving up with [`LinalgError::NoConvergence`].
    pub max_sweeps: usize,
    /// Singular values at or below `rank_tol * sigma_1` count as zero.
    pub rank_tol: f64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions {
            convergence_tol: 1e-12,
            max_sweeps: 60,
            rank_tol: 1e-12,
        }
    }
}

/// Result of a full factorization `A = U diag(sigma) V^T`.
///
/// With `p = min(rows, cols)`: `u` is `rows x p`, `sigma` has `p`
/// non-increasing nonnegative entries, `v` is `cols x p`, and both factors
/// have orthonormal columns. Singular values at or below the rank cutoff are
/// stored as exact zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    u: Matrix,
    sigma: Vec<f64>,
    v: Matrix,
    rank: usize,
}

impl SvdFactors {
    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    /// Count of singular values above the rank cutoff.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Row count of the factored matrix.
    pub fn rows(&self) -> usize {
        self.u.rows()
    }

    /// Column count of the factored matrix.
    pub fn cols(&self) -> usize {
        self.v.rows()
    }
}

/// Leading `k` singular triplets of a factorization, plus the total spectral
/// energy of the source matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    u_k: Matrix,
    sigma_k: Vec<f64>,
    v_k: Matrix,
    total_energy: f64,
}

impl TruncatedSvd {
    pub(crate) fn from_parts(
        u_k: Matrix,
        sigma_k: Vec<f64>,
        v_k: Matrix,
        total_energy: f64,
    ) -> Result<Self, LinalgError> {
        if sigma_k.is_empty() {
            return Err(LinalgError::EmptyMatrix);
        }
        if u_k.cols() != sigma_k.len() || v_k.cols() != sigma_k.len() {
            return Err(LinalgError::DimensionMismatch {
                expected: sigma_k.len(),
                got: u_k.cols(),
            });
        }
        Ok(TruncatedSvd {
            u_k,
            sigma_k,
            v_k,
            total_energy,
        })
    }

    pub fn u_k(&self) -> &Matrix {
        &self.u_k
    }

    pub fn sigma_k(&self) -> &[f64] {
        &self.sigma_k
    }

    pub fn v_k(&self) -> &Matrix {
        &self.v_k
    }

    pub fn k(&self) -> usize {
        self.sigma_k.len()
    }

    /// Row count of the source matrix.
    pub fn rows(&self) -> usize {
        self.u_k.rows()
    }

    /// Column count of the source matrix.
    pub fn cols(&self) -> usize {
        self.v_k.rows()
    }

    /// Sum of all squared singular values of the source matrix, not just the
    /// retained ones.
    pub fn total_energy(&self) -> f64 {
        self.total_energy
    }
}

static SVD_CALLS: AtomicU64 = AtomicU64::new(0);

/// Number of complete factorizations performed by this process so far.
///
/// Diagnostic hook: callers can snapshot it around a code path to assert the
/// path reuses one factorization instead of recomputing.
pub fn svd_call_count() -> u64 {
    SVD_CALLS.load(Ordering::Relaxed)
}

/// Factors `a` as `U diag(sigma) V^T` with a deterministic one-sided Jacobi
/// iteration.
///
/// Inputs with fewer rows than columns are handled by factoring the
/// transpose and swapping the roles of `U` and `V`. Repeated calls on the
/// same input yield bit-identical factors.
pub fn svd(a: &Matrix, opts: &SvdOptions) -> Result<SvdFactors, LinalgError> {
    SVD_CALLS.fetch_add(1, Ordering::Relaxed);
    debug_assert!(opts.convergence_tol >= 0.0 && opts.rank_tol >= 0.0);
    if a.rows() >= a.cols() {
        let (u, sigma, v, rank) = jacobi_onesided(a, opts)?;
        Ok(SvdFactors { u, sigma, v, rank })
    } else {
        let (u, sigma, v, rank) = jacobi_onesided(&a.transpose(), opts)?;
        Ok(SvdFactors {
            u: v,
            sigma,
            v: u,
            rank,
        })
    }
}

/// Keeps the leading `k` singular triplets. Fails with
/// [`LinalgError::RankOutOfRange`] unless `1 <= k <= min(rows, cols)`.
pub fn truncate(factors: &SvdFactors, k: usize) -> Result<TruncatedSvd, LinalgError> {
    let max = factors.sigma.len();
    if k < 1 || k > max {
        return Err(LinalgError::RankOutOfRange { k, max });
    }
    TruncatedSvd::from_parts(
        factors.u.leading_columns(k),
        factors.sigma[..k].to_vec(),
        factors.v.leading_columns(k),
        sum_squares_small_first(&factors.sigma),
    )
}

/// Dense reconstruction `sum_i sigma_i u_i v_i^T` of a truncation.
pub fn reconstruct(t: &TruncatedSvd) -> Matrix {
    let m = t.rows();
    let n = t.cols();
    let mut out = vec![0.0; m * n];
    let mut vcol = vec![0.0; n];
    for i in 0..t.k() {
        let s = t.sigma_k[i];
        for (c, slot) in vcol.iter_mut().enumerate() {
            *slot = t.v_k.get(c, i);
        }
        for r in 0..m {
            let f = s * t.u_k.get(r, i);
            let row = &mut out[r * n..(r + 1) * n];
            for (dst, &v) in row.iter_mut().zip(&vcol) {
                *dst += f * v;
            }
        }
    }
    Matrix::from_vec(m, n, out).expect("finite factors reconstruct to a finite matrix")
}

/// Squared Frobenius norm, accumulated in double precision.
pub fn frobenius_sq(a: &Matrix) -> f64 {
    a.data.iter().map(|x| x * x).sum()
}

/// Sums squared values starting from the end of the slice.
///
/// Singular values are stored largest-first, so this accumulates the small
/// terms before the dominant ones. Every energy total in the crate goes
/// through here so that equal inputs sum to bitwise equal results.
pub(crate) fn sum_squares_small_first(values: &[f64]) -> f64 {
    values.iter().rev().fold(0.0, |acc, &x| acc + x * x)
}

/// One-sided Jacobi on a matrix with `rows >= cols`. Returns `(u, sigma, v,
/// rank)` with `u: m x n`, `sigma: n`, `v: n x n`.
fn jacobi_onesided(
    a: &Matrix,
    opts: &SvdOptions,
) -> Result<(Matrix, Vec<f64>, Matrix, usize), LinalgError> {
    let m = a.rows();
    let n = a.cols();
    debug_assert!(m >= n);

    // Column-major working copies: w accumulates U * diag(sigma), v the
    // right factor.
    let mut w = vec![0.0; m * n];
    for r in 0..m {
        for c in 0..n {
            w[c * m + r] = a.get(r, c);
        }
    }
    let mut v = vec![0.0; n * n];
    for j in 0..n {
        v[j * n + j] = 1.0;
    }

    let tol = opts.convergence_tol;
    let tol2 = tol * tol;
    let mut converged = n < 2;
    for _ in 0..opts.max_sweeps {
        let mut rotations = 0usize;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let (app, aqq, apq) = column_moments(&w, m, p, q);
                if apq * apq <= tol2 * app * aqq {
                    continue;
                }
                rotations += 1;
                // Rotation angle that zeroes the (p, q) entry of the column
                // Gram matrix; the smaller root keeps |t| <= 1 for stability.
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut w, m, p, q, c, s);
                rotate_pair(&mut v, n, p, q, c, s);
            }
        }
        if rotations == 0 {
            converged = true;
            break;
        }
    }
    if !converged {
        // The budget ran out mid-progress; the final sweep may still have
        // finished the job, so measure before failing.
        let residual = max_relative_offdiag(&w, m, n);
        if residual > tol {
            return Err(LinalgError::NoConvergence {
                sweeps: opts.max_sweeps,
                residual,
            });
        }
    }

    let norms: Vec<f64> = (0..n)
        .map(|j| {
            let col = &w[j * m..(j + 1) * m];
            col.iter().map(|x| x * x).sum::<f64>().sqrt()
        })
        .collect();

    // Stable order by descending magnitude; exact ties keep sweep order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("norms are not NaN"));

    let cutoff = opts.rank_tol * norms[order[0]];
    let mut sigma = vec![0.0; n];
    let mut rank = 0;
    for (dst, &src) in order.iter().enumerate() {
        if norms[src] > cutoff {
            sigma[dst] = norms[src];
            rank = dst + 1;
        }
    }

    let mut u = vec![0.0; m * n];
    let mut filled: Vec<usize> = Vec::with_capacity(n);
    let mut pending: Vec<usize> = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        if norms[src] > 0.0 {
            let col = &w[src * m..(src + 1) * m];
            for (i, &x) in col.iter().enumerate() {
                u[dst * m + i] = x / norms[src];
            }
            filled.push(dst);
        } else {
            pending.push(dst);
        }
    }
    // Exactly zero columns carry no direction of their own; extend the rest
    // to an orthonormal set so U keeps its column orthonormality.
    for dst in pending {
        complete_orthonormal_column(&mut u, m, &filled, dst);
        filled.push(dst);
    }

    let mut sorted_v = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        sorted_v[dst * n..(dst + 1) * n].copy_from_slice(&v[src * n..(src + 1) * n]);
    }

    Ok((
        Matrix::from_col_major(m, n, &u)?,
        sigma,
        Matrix::from_col_major(n, n, &sorted_v)?,
        rank,
    ))
}

/// Squared norms of columns `p`, `q` and their dot product, in one pass.
fn column_moments(data: &[f64], len: usize, p: usize, q: usize) -> (f64, f64, f64) {
    let cp = &data[p * len..(p + 1) * len];
    let cq = &data[q * len..(q + 1) * len];
    let mut app = 0.0;
    let mut aqq = 0.0;
    let mut apq = 0.0;
    for (&x, &y) in cp.iter().zip(cq) {
        app += x * x;
        aqq += y * y;
        apq += x * y;
    }
    (app, aqq, apq)
}

/// Applies the plane rotation `[c, -s; s, c]` to columns `p < q`.
fn rotate_pair(data: &mut [f64], len: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = data.split_at_mut(q * len);
    let cp = &mut head[p * len..(p + 1) * len];
    let cq = &mut tail[..len];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xv = *x;
        let yv = *y;
        *x = c * xv - s * yv;
        *y = s * xv + c * yv;
    }
}

/// Largest `|a_p . a_q| / (|a_p| |a_q|)` over all column pairs; zero-norm
/// columns count as orthogonal.
fn max_relative_offdiag(data: &[f64], len: usize, n: usize) -> f64 {
    let mut worst = 0.0f64;
    for p in 0..n.saturating_sub(1) {
        for q in (p + 1)..n {
            let (app, aqq, apq) = column_moments(data, len, p, q);
            if app > 0.0 && aqq > 0.0 {
                worst = worst.max(apq.abs() / (app * aqq).sqrt());
            }
        }
    }
    worst
}

/// Writes into column `dst` a unit vector orthogonal to all `filled` columns
/// of the column-major buffer `u`.
fn complete_orthonormal_column(u: &mut [f64], m: usize, filled: &[usize], dst: usize) {
    // Canonical basis vector least represented by the filled columns; its
    // residual squared norm is at least (m - filled) / m, so normalization
    // below is safe.
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..m {
        let consumed: f64 = filled.iter().map(|&j| u[j * m + i] * u[j * m + i]).sum();
        let residual = 1.0 - consumed;
        if residual > best {
            best = residual;
            best_i = i;
        }
    }
    let mut col = vec![0.0; m];
    col[best_i] = 1.0;
    // Two rounds of modified Gram-Schmidt keep the result orthogonal well
    // below the 1e-10 budget.
    for _ in 0..2 {
        for &j in filled {
            let other = &u[j * m..(j + 1) * m];
            let dot: f64 = other.iter().zip(&col).map(|(a, b)| a * b).sum();
            for (slot, &x) in col.iter_mut().zip(other) {
                *slot -= dot * x;
            }
        }
    }
    let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
    for (i, &x) in col.iter().enumerate() {
        u[dst * m + i] = x / norm;
    }
}
