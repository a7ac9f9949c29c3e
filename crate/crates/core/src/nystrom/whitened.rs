use std::collections::HashSet;

use faer::{Mat, MatMut, MatRef};

use crate::error::{Error, Result};
use crate::kernels::{center_vector, ColumnOracle};
use crate::linalg::{axpy, dot, Growable};

/// Landmarks whose residual kernel diagonal falls below this fraction of
/// `K_ii` are rejected.
pub const LANDMARK_TOL: f64 = 1e-8;

/// Split factorization of `G = N λ SᵀKS + SᵀKHKS` grown one landmark at a
/// time.
///
/// With `SᵀKS = R_Wᵀ R_W`, the columns `F = K S R_W^{-1}` are the incomplete
/// Cholesky factor of `K` on the landmarks, `F̄ = H F`, and
/// `M = N λ I + F̄ᵀ F̄ = R_Mᵀ R_M`. Then `G = R_Wᵀ M R_W`, so `R_M R_W` is the
/// Cholesky factor of `G`, and `Ψ = F̄ R_M^{-1}` satisfies
/// `Ψ Ψᵀ = (L̄ + N λ I)^{-1} L̄` for the Nyström approximation `L = F Fᵀ`.
#[derive(Clone, Debug)]
pub struct WhitenedState {
    n: usize,
    lambda: f64,
    tol: f64,
    f: Growable,
    psi: Growable,
    /// `R_Mᵀ`, lower triangular.
    mt: Growable,
    indices: Vec<usize>,
    weights: Vec<f64>,
    seen: HashSet<usize>,
}

impl WhitenedState {
    pub fn new(n: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("must be positive, got {lambda}")));
        }
        Ok(Self {
            n,
            lambda,
            tol: LANDMARK_TOL,
            f: Growable::new(n, 0),
            psi: Growable::new(n, 0),
            mt: Growable::new(0, 0),
            indices: Vec::new(),
            weights: Vec::new(),
            seen: HashSet::new(),
        })
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn set_tol(&mut self, tol: f64) {
        self.tol = tol;
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rank(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Incomplete Cholesky columns `F`, with `F Fᵀ = K S (SᵀKS)^{-1} SᵀK`.
    pub fn f(&self) -> MatRef<'_, f64> {
        self.f.as_ref()
    }

    /// `Ψ = F̄ R_M^{-1}`.
    pub fn psi(&self) -> MatRef<'_, f64> {
        self.psi.as_ref()
    }

    /// Upper factor `R_M` of `N λ I + F̄ᵀ F̄`.
    pub fn m_factor(&self) -> MatRef<'_, f64> {
        self.mt.as_ref().transpose()
    }

    /// Upper factor `R_W` of `SᵀKS`, read off the landmark rows of `F`.
    pub fn w_factor(&self) -> Mat<f64> {
        let m = self.rank();
        Mat::from_fn(m, m, |i, j| self.weights[j] * self.f.as_ref()[(self.indices[j], i)])
    }

    /// Adds landmark `i` with weight `s`. On error the state is unchanged.
    pub fn step(&mut self, oracle: &dyn ColumnOracle, i: usize, s: f64) -> Result<f64> {
        if oracle.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: oracle.n(),
            });
        }
        if i >= self.n {
            return Err(Error::IndexOutOfRange { index: i, len: self.n });
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::invalid(
                "s",
                format!("weight must be positive and finite, got {s}"),
            ));
        }
        if self.seen.contains(&i) {
            return Err(Error::RejectedLandmark {
                index: i,
                relative_pivot: 0.0,
            });
        }
        let mut v = oracle.column(i);
        let kii = v[i];
        let m = self.rank();
        let fi: Vec<f64> = (0..m).map(|j| self.f.as_ref()[(i, j)]).collect();
        let resid = kii - dot(&fi, &fi);
        let rel = if kii > 0.0 { resid / kii } else { 0.0 };
        if !(rel >= self.tol) {
            return Err(Error::RejectedLandmark {
                index: i,
                relative_pivot: rel.max(0.0),
            });
        }
        for (j, &c) in fi.iter().enumerate() {
            axpy(-c, self.f.col(j), &mut v);
        }
        let delta = resid.sqrt();
        v.iter_mut().for_each(|x| *x /= delta);

        let mut fbar = v.clone();
        center_vector(&mut fbar);
        let mut r: Vec<f64> = (0..m).map(|j| dot(self.f.col(j), &fbar)).collect();
        self.mt
            .as_ref()
            .solve_lower_triangular_in_place(MatMut::from_column_major_slice_mut(&mut r, m, 1));
        let schur = self.n as f64 * self.lambda + dot(&fbar, &fbar) - dot(&r, &r);
        if !(schur > 0.0) {
            return Err(Error::RejectedLandmark {
                index: i,
                relative_pivot: rel,
            });
        }
        let rho = schur.sqrt();
        let mut psi = fbar;
        for (j, &c) in r.iter().enumerate() {
            axpy(-c, self.psi.col(j), &mut psi);
        }
        psi.iter_mut().for_each(|x| *x /= rho);

        self.f.push_col(&v);
        self.psi.push_col(&psi);
        self.mt.resize(m + 1, m + 1);
        let mt = self.mt.mat_mut();
        for (j, &c) in r.iter().enumerate() {
            mt[(m, j)] = c;
        }
        mt[(m, m)] = rho;
        self.indices.push(i);
        self.weights.push(s);
        self.seen.insert(i);
        Ok(rel)
    }

    /// `Ψ Ψᵀ X`.
    pub fn projector_apply(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if x.nrows() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.nrows(),
            });
        }
        let psi = self.psi.as_ref();
        if psi.ncols() == 0 {
            return Ok(Mat::zeros(x.nrows(), x.ncols()));
        }
        Ok(psi * (psi.transpose() * x))
    }
}
