use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2, Growable};

/// Columns whose residual after orthogonalization is below this fraction of
/// their norm are treated as dependent.
pub const DEPENDENCE_TOL: f64 = 1e-10;

/// Result of appending one column.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QrAppend {
    /// A new orthonormal direction was added.
    Added,
    /// The column lies in the span of `Q`; only its coefficients were kept.
    Dependent,
}

/// Thin QR factorization `A = Q P` grown one column at a time by modified
/// Gram–Schmidt with one reorthogonalization pass.
///
/// `Q` is `N x r` and `P` is `r x m`; dependent columns add a column to `P`
/// but no direction to `Q`, so `r <= m`.
#[derive(Clone, Debug)]
pub struct QrState {
    n: usize,
    q: Growable,
    p: Growable,
    dependent: Vec<bool>,
}

impl QrState {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            q: Growable::new(n, 0),
            p: Growable::new(0, 0),
            dependent: Vec::new(),
        }
    }

    pub fn q(&self) -> MatRef<'_, f64> {
        self.q.as_ref()
    }

    pub fn p(&self) -> MatRef<'_, f64> {
        self.p.as_ref()
    }

    /// Number of orthonormal directions.
    pub fn rank(&self) -> usize {
        self.q.ncols()
    }

    /// Number of appended columns.
    pub fn len(&self) -> usize {
        self.p.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dependent_flags(&self) -> &[bool] {
        &self.dependent
    }

    pub fn append(&mut self, a: &[f64]) -> Result<QrAppend> {
        self.push(a, true)
    }

    /// Like [`QrState::append`], but a dependent column leaves the state
    /// untouched.
    pub fn append_independent(&mut self, a: &[f64]) -> Result<QrAppend> {
        self.push(a, false)
    }

    fn push(&mut self, a: &[f64], keep_dependent: bool) -> Result<QrAppend> {
        if a.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: a.len(),
            });
        }
        let r = self.rank();
        let m = self.len();
        let mut v = a.to_vec();
        let mut coef = vec![0.0; r];
        for _ in 0..2 {
            for (k, ck) in coef.iter_mut().enumerate() {
                let qk = self.q.col(k);
                let h = dot(qk, &v);
                axpy(-h, qk, &mut v);
                *ck += h;
            }
        }
        let anorm = norm2(a);
        let rnorm = norm2(&v);
        let dependent = !(rnorm > DEPENDENCE_TOL * anorm);
        if dependent && !keep_dependent {
            return Ok(QrAppend::Dependent);
        }
        if dependent {
            self.p.resize(r, m + 1);
            self.p.col_mut(m)[..r].copy_from_slice(&coef);
        } else {
            v.iter_mut().for_each(|x| *x /= rnorm);
            self.q.push_col(&v);
            self.p.resize(r + 1, m + 1);
            let col = self.p.col_mut(m);
            col[..r].copy_from_slice(&coef);
            col[r] = rnorm;
        }
        self.dependent.push(dependent);
        Ok(if dependent {
            QrAppend::Dependent
        } else {
            QrAppend::Added
        })
    }

    /// `Q P`, which reproduces the appended columns.
    pub fn reconstruct(&self) -> Mat<f64> {
        self.q.as_ref() * self.p.as_ref()
    }
}

/// Appends `a` to `state`; `qr_append` in function form.
pub fn qr_append(state: &mut QrState, a: &[f64]) -> Result<QrAppend> {
    state.append(a)
}
