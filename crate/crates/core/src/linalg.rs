//! Dense linear-algebra helpers shared by the solvers and the verifiers.
//!
//! Everything here is a thin layer over faer: eigendecompositions sorted the
//! way the rest of the crate expects them (descending), spectral norms, and
//! subspace comparisons.

use faer::linalg::solvers::Solve;
use faer::{Col, Mat, MatRef, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff used whenever a pseudo-inverse is formed.
pub const PINV_RCOND: f64 = 1e-12;

/// Above this size spectral norms switch from a dense SVD to Lanczos
/// bidiagonalization.
pub const DENSE_NORM_LIMIT: usize = 400;

/// Symmetric eigendecomposition with eigenvalues in nonincreasing order.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Column `j` is the eigenvector for `values[j]`.
    pub vectors: Mat<f64>,
}

impl SymEigen {
    pub fn new(a: MatRef<'_, f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.ncols(),
            });
        }
        let evd = a
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::decomposition("symmetric eigendecomposition", e))?;
        let s = evd.S().column_vector();
        let u = evd.U();
        let values: Vec<f64> = (0..n).rev().map(|j| s[j]).collect();
        let vectors = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
        Ok(Self { values, vectors })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `U f(Σ) Uᵀ` for a spectral function `f`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Mat<f64> {
        let n = self.len();
        let scaled = Mat::from_fn(n, n, |i, j| self.vectors[(i, j)] * f(self.values[j]));
        let out = &scaled * self.vectors.transpose();
        symmetrize(out.as_ref())
    }
}

/// Eigenvalues of a symmetric matrix, nonincreasing.
pub fn sym_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    let mut v = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::decomposition("symmetric eigenvalues", e))?;
    v.reverse();
    Ok(v)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: MatRef<'_, f64>) -> Result<f64> {
    Ok(sym_eigenvalues(a)?.last().copied().unwrap_or(0.0))
}

pub fn symmetrize(a: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// Largest singular value.
pub fn spectral_norm(a: MatRef<'_, f64>) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    if a.nrows().min(a.ncols()) <= DENSE_NORM_LIMIT {
        let s = a
            .singular_values()
            .map_err(|e| Error::decomposition("singular values", e))?;
        return Ok(s.first().copied().unwrap_or(0.0));
    }
    Ok(lanczos_norm(a.nrows(), a.ncols(), |v| a * v, |u| a.transpose() * u))
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_spectral_norm(a: MatRef<'_, f64>) -> Result<f64> {
    if a.nrows() <= DENSE_NORM_LIMIT {
        let ev = sym_eigenvalues(a)?;
        return Ok(ev.iter().fold(0.0_f64, |m, x| m.max(x.abs())));
    }
    spectral_norm(a)
}

/// Largest singular value of an implicit operator by Golub–Kahan–Lanczos
/// bidiagonalization with full reorthogonalization.
///
/// Converges from below; iterations stop once the Ritz value is stable to
/// about 1e-14 relative or the Krylov space is exhausted.
pub fn lanczos_norm(
    nrows: usize,
    ncols: usize,
    apply: impl Fn(&Col<f64>) -> Col<f64>,
    apply_t: impl Fn(&Col<f64>) -> Col<f64>,
) -> f64 {
    let max_iter = nrows.min(ncols).min(300);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a4c);
    let mut v = Col::from_fn(ncols, |_| rng.random::<f64>() - 0.5);
    let nv = v.norm_l2();
    v /= nv;

    let mut vs: Vec<Col<f64>> = vec![v.clone()];
    let mut us: Vec<Col<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let mut u = apply(&v);
    let mut prev = 0.0;
    let mut stable = 0;
    for k in 0..max_iter {
        if k > 0 {
            u -= betas[k - 1] * &us[k - 1];
        }
        reorthogonalize(&mut u, &us);
        let alpha = u.norm_l2();
        if alpha <= f64::MIN_POSITIVE {
            alphas.push(0.0);
            break;
        }
        u /= alpha;
        alphas.push(alpha);
        us.push(u.clone());

        let mut w = apply_t(&u);
        w -= alpha * &vs[k];
        reorthogonalize(&mut w, &vs);
        let beta = w.norm_l2();

        let est = bidiagonal_norm(&alphas, &betas);
        if (est - prev).abs() <= 1e-14 * est.max(f64::MIN_POSITIVE) {
            stable += 1;
            if stable >= 3 {
                return est;
            }
        } else {
            stable = 0;
        }
        prev = est;

        if beta <= 1e-14 * est.max(f64::MIN_POSITIVE) {
            break;
        }
        w /= beta;
        betas.push(beta);
        vs.push(w.clone());
        u = apply(&w);
    }
    bidiagonal_norm(&alphas, &betas)
}

fn reorthogonalize(x: &mut Col<f64>, basis: &[Col<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = b.transpose() * &*x;
            *x -= c * b;
        }
    }
}

fn bidiagonal_norm(alphas: &[f64], betas: &[f64]) -> f64 {
    let k = alphas.len();
    if k == 0 {
        return 0.0;
    }
    let b = Mat::from_fn(k, k, |i, j| {
        if i == j {
            alphas[i]
        } else if j == i + 1 && i < betas.len() {
            betas[i]
        } else {
            0.0
        }
    });
    b.singular_values().ok().and_then(|s| s.first().copied()).unwrap_or(0.0)
}

/// Orthonormal basis for the column space of `a` (thin Householder QR).
pub fn orthonormal_basis(a: MatRef<'_, f64>) -> Mat<f64> {
    let qr = a.qr();
    let q = qr.compute_thin_Q();
    q
}

/// Largest principal angle (radians) between the column spaces of `a` and `b`,
/// computed from the sine side so small angles keep full accuracy.
pub fn max_principal_angle(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    let qa = orthonormal_basis(a);
    let qb = orthonormal_basis(b);
    let proj = qa.transpose() * &qb;
    let resid = &qb - &qa * &proj;
    let s = spectral_norm(resid.as_ref())?;
    Ok(s.clamp(0.0, 1.0).asin())
}

/// Solves the SPD system `a x = b` by Cholesky.
pub fn spd_solve(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let llt = a.llt(Side::Lower).map_err(|e| Error::decomposition("cholesky", e))?;
    Ok(llt.solve(b))
}

/// Flips signs of matching column pairs so the first nonzero entry of each
/// column of `primary` is positive. The same flip is applied to every matrix
/// in `followers`.
pub fn normalize_signs(primary: &mut Mat<f64>, followers: &mut [&mut Mat<f64>]) {
    for j in 0..primary.ncols() {
        let col = primary.col(j);
        let scale = (0..col.nrows()).fold(0.0_f64, |m, i| m.max(col[i].abs()));
        let first = (0..col.nrows()).find(|&i| col[i].abs() > 1e-8 * scale);
        if let Some(i) = first {
            if col[i] < 0.0 {
                primary.col_mut(j).iter_mut().for_each(|x| *x = -*x);
                for f in followers.iter_mut() {
                    if j < f.ncols() {
                        f.col_mut(j).iter_mut().for_each(|x| *x = -*x);
                    }
                }
            }
        }
    }
}

/// Maximum absolute entry.
pub fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0_f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

/// Builds a matrix from row-major nested vectors.
pub fn mat_from_rows(rows: &[Vec<f64>]) -> Mat<f64> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    Mat::from_fn(nrows, ncols, |i, j| rows[i][j])
}

/// Dense matrix with geometrically growing storage. Appending a row or
/// column costs amortized `O(size)`.
#[derive(Clone, Debug)]
pub struct Growable {
    mat: Mat<f64>,
    row_cap: usize,
    col_cap: usize,
}

impl Growable {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            mat: Mat::zeros(nrows, ncols),
            row_cap: nrows,
            col_cap: ncols,
        }
    }

    /// Resizes to `nrows x ncols`; new entries are zero.
    pub fn resize(&mut self, nrows: usize, ncols: usize) {
        if nrows > self.row_cap || ncols > self.col_cap {
            if nrows > self.row_cap {
                self.row_cap = nrows.max(2 * self.row_cap).max(4);
            }
            if ncols > self.col_cap {
                self.col_cap = ncols.max(2 * self.col_cap).max(4);
            }
            self.mat.reserve(self.row_cap, self.col_cap);
        }
        self.mat.resize_with(nrows, ncols, |_, _| 0.0);
    }

    /// Appends a column; `col.len()` must equal the row count.
    pub fn push_col(&mut self, col: &[f64]) {
        let (r, c) = (self.mat.nrows(), self.mat.ncols());
        debug_assert_eq!(col.len(), r);
        self.resize(r, c + 1);
        self.mat.col_as_slice_mut(c).copy_from_slice(col);
    }

    pub fn nrows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.mat.ncols()
    }

    pub fn as_ref(&self) -> MatRef<'_, f64> {
        self.mat.as_ref()
    }

    pub fn mat(&self) -> &Mat<f64> {
        &self.mat
    }

    pub fn mat_mut(&mut self) -> &mut Mat<f64> {
        &mut self.mat
    }

    pub fn col(&self, j: usize) -> &[f64] {
        self.mat.col_as_slice(j)
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        self.mat.col_as_slice_mut(j)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
