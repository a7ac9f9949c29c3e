//! Kernel evaluation, Gram matrices and centering.

use std::sync::Arc;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelFamily {
    GaussianRbf,
}

/// A kernel family with its bandwidth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub sigma: f64,
}

impl KernelSpec {
    /// Gaussian RBF kernel `exp(-|x - y|^2 / (2 sigma^2))`.
    pub fn rbf(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
        }
        Ok(Self {
            family: KernelFamily::GaussianRbf,
            sigma,
        })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.family {
            KernelFamily::GaussianRbf => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * self.sigma * self.sigma)).exp()
            }
        }
    }

    /// Upper bound on `k(x, x')` over all inputs.
    pub fn sup_bound(&self) -> f64 {
        match self.family {
            KernelFamily::GaussianRbf => 1.0,
        }
    }
}

/// Evaluates `k(x, y)`.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.eval(x, y)
}

/// Dense symmetric kernel matrix.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    entries: Mat<f64>,
}

impl GramMatrix {
    /// Wraps a square matrix, mirroring its upper triangle so the result is
    /// exactly symmetric.
    pub fn from_mat(m: Mat<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m.ncols(),
            });
        }
        let entries = Mat::from_fn(n, n, |i, j| if i <= j { m[(i, j)] } else { m[(j, i)] });
        Ok(Self { entries })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_ref(&self) -> MatRef<'_, f64> {
        self.entries.as_ref()
    }

    pub fn into_inner(self) -> Mat<f64> {
        self.entries
    }

    pub fn trace(&self) -> f64 {
        (0..self.n()).map(|i| self.entries[(i, i)]).sum()
    }

    pub fn centered(&self) -> GramMatrix {
        center(self)
    }
}

/// Row-major copy of a data matrix, one observation per row.
fn rows_of(x: MatRef<'_, f64>) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .map(|i| (0..x.ncols()).map(|j| x[(i, j)]).collect())
        .collect()
}

/// Gram matrix of the rows of `x`.
pub fn gram(spec: &KernelSpec, x: MatRef<'_, f64>) -> GramMatrix {
    let rows = rows_of(x);
    let n = rows.len();
    let mut k = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = spec.eval_unchecked(&rows[i], &rows[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    GramMatrix { entries: k }
}

/// `H K H` computed by mean subtraction.
pub fn center(k: &GramMatrix) -> GramMatrix {
    let n = k.n();
    let a = k.as_ref();
    let nf = n as f64;
    let col_means: Vec<f64> = (0..n).map(|j| (0..n).map(|i| a[(i, j)]).sum::<f64>() / nf).collect();
    let row_means: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).sum::<f64>() / nf).collect();
    let grand = col_means.iter().sum::<f64>() / nf;
    let c = Mat::from_fn(n, n, |i, j| a[(i, j)] - row_means[i] - col_means[j] + grand);
    GramMatrix {
        entries: crate::linalg::symmetrize(c.as_ref()),
    }
}

/// Access to individual kernel columns without requiring the full matrix.
pub trait ColumnOracle: Sync {
    fn n(&self) -> usize;

    fn entry(&self, i: usize, j: usize) -> f64;

    /// Writes column `i` of the kernel matrix into `out`.
    fn column_into(&self, i: usize, out: &mut [f64]);

    fn column(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n()];
        self.column_into(i, &mut v);
        v
    }
}

impl ColumnOracle for GramMatrix {
    fn n(&self) -> usize {
        self.entries.nrows()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    fn column_into(&self, i: usize, out: &mut [f64]) {
        let col = self.entries.col(i);
        for (o, v) in out.iter_mut().zip(col.iter()) {
            *o = *v;
        }
    }
}

/// Training inputs of one view together with its kernel; evaluates kernel
/// columns on demand.
#[derive(Clone, Debug)]
pub struct KernelData {
    pub spec: KernelSpec,
    rows: Arc<Vec<Vec<f64>>>,
}

impl KernelData {
    pub fn new(spec: KernelSpec, x: MatRef<'_, f64>) -> Self {
        Self {
            spec,
            rows: Arc::new(rows_of(x)),
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn data(&self) -> Mat<f64> {
        Mat::from_fn(self.rows.len(), self.dim(), |i, j| self.rows[i][j])
    }

    pub fn gram(&self) -> GramMatrix {
        gram(&self.spec, self.data().as_ref())
    }

    /// Kernel affinities `[k(x_1, x), ..., k(x_N, x)]` of a new point.
    pub fn affinities(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.rows.iter().map(|r| self.spec.eval_unchecked(r, x)).collect())
    }
}

impl ColumnOracle for KernelData {
    fn n(&self) -> usize {
        self.rows.len()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.spec.eval_unchecked(&self.rows[i], &self.rows[j])
    }

    fn column_into(&self, i: usize, out: &mut [f64]) {
        let xi = &self.rows[i];
        for (o, r) in out.iter_mut().zip(self.rows.iter()) {
            *o = self.spec.eval_unchecked(r, xi);
        }
    }
}

/// Subtracts the mean from `v` in place, i.e. applies `H`.
pub fn center_vector(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// `s * H k_i` for column `i` of the kernel behind `oracle`.
pub fn centered_column(oracle: &dyn ColumnOracle, i: usize, s: f64) -> Result<Vec<f64>> {
    let n = oracle.n();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid(
            "s",
            format!("weight must be positive and finite, got {s}"),
        ));
    }
    let mut v = oracle.column(i);
    center_vector(&mut v);
    v.iter_mut().for_each(|x| *x *= s);
    Ok(v)
}
