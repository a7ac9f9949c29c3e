//! Nyström factors and the incremental factorizations used along a rank path.

mod chol;
pub(crate) mod qr;
mod whitened;

pub use chol::{chol_init, BorderRule, CholState, StepInfo, DEFAULT_PIVOT_TOL};
pub use qr::{qr_append, QrAppend, QrState, DEPENDENCE_TOL};
pub use whitened::{WhitenedState, LANDMARK_TOL};

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::kernels::ColumnOracle;
use crate::linalg::{symmetrize, SymEigen, PINV_RCOND};
use crate::sampling::SamplingPlan;

/// `L_gamma = C (W + N gamma I)^+ C^T` held as a thin factor `B` with
/// `L_gamma = B B^T`.
#[derive(Clone, Debug)]
pub struct NystromFactor {
    /// Weighted sampled columns `K S`.
    pub c: Mat<f64>,
    /// `S^T K S + N gamma I`.
    pub w_reg: Mat<f64>,
    pub gamma: f64,
    b: Mat<f64>,
}

impl NystromFactor {
    pub fn n(&self) -> usize {
        self.c.nrows()
    }

    /// Number of directions kept by the pseudo-inverse.
    pub fn rank(&self) -> usize {
        self.b.ncols()
    }

    /// `N x r` factor with `L_gamma = B B^T`.
    pub fn factor(&self) -> MatRef<'_, f64> {
        self.b.as_ref()
    }

    /// `L_gamma v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: v.len(),
            });
        }
        let v = MatRef::from_column_major_slice(v, v.len(), 1);
        let t = self.b.transpose() * v;
        let out = &self.b * &t;
        Ok((0..self.n()).map(|i| out[(i, 0)]).collect())
    }

    /// Dense `N x N` approximation.
    pub fn dense(&self) -> Mat<f64> {
        symmetrize((&self.b * self.b.transpose()).as_ref())
    }
}

/// Builds the Nyström factor for the plan's landmarks and weights.
pub fn factor(oracle: &dyn ColumnOracle, plan: &SamplingPlan, gamma: f64) -> Result<NystromFactor> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", format!("must be nonnegative, got {gamma}")));
    }
    let n = oracle.n();
    let m = plan.len();
    if let Some(&bad) = plan.indices.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    let mut c = Mat::<f64>::zeros(n, m);
    for (j, (&i, &w)) in plan.indices.iter().zip(&plan.weights).enumerate() {
        let col = oracle.column(i);
        for (r, v) in col.into_iter().enumerate() {
            c[(r, j)] = w * v;
        }
    }
    let ng = n as f64 * gamma;
    let w_reg = Mat::from_fn(m, m, |a, b| {
        plan.weights[a] * c[(plan.indices[a], b)] + if a == b { ng } else { 0.0 }
    });
    let w_reg = symmetrize(w_reg.as_ref());
    let b = pinv_factor(c.as_ref(), w_reg.as_ref())?;
    Ok(NystromFactor { c, w_reg, gamma, b })
}

/// `C V_k Λ_k^{-1/2}` over the eigenpairs of `w` above the relative cutoff.
fn pinv_factor(c: MatRef<'_, f64>, w: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let m = w.nrows();
    if m == 0 {
        return Ok(Mat::zeros(c.nrows(), 0));
    }
    let eig = SymEigen::new(w)?;
    let top = eig.values[0].max(0.0);
    let keep: Vec<usize> = (0..m)
        .filter(|&j| eig.values[j] > PINV_RCOND * top && top > 0.0)
        .collect();
    let vk = Mat::from_fn(m, keep.len(), |a, b| {
        eig.vectors[(a, keep[b])] / eig.values[keep[b]].sqrt()
    });
    Ok(c * &vk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gram, GramMatrix, KernelSpec};
    use crate::leverage::SamplingDistribution;
    use crate::linalg::{max_abs, min_eigenvalue};
    use crate::sampling::sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(n: usize, rank: usize, seed: u64) -> GramMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Mat::from_fn(n, rank, |_, _| rng.random::<f64>() - 0.5);
        GramMatrix::from_mat(&b * b.transpose()).unwrap()
    }

    fn dense_pinv(a: MatRef<'_, f64>) -> Mat<f64> {
        let e = SymEigen::new(a).unwrap();
        let top = e.values[0];
        e.reconstruct_with(|s| if s > 1e-12 * top { 1.0 / s } else { 0.0 })
    }

    #[test]
    fn full_plan_reproduces_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Mat::from_fn(20, 2, |_, _| rng.random::<f64>() * 4.0);
        let k = gram(&KernelSpec::rbf(1.0).unwrap(), x.as_ref());
        let f = factor(&k, &SamplingPlan::full(20), 0.0).unwrap();
        assert!(max_abs((f.dense() - k.as_ref()).as_ref()) < 1e-8);
    }

    #[test]
    fn single_landmark_of_identity() {
        let k = GramMatrix::from_mat(Mat::identity(5, 5)).unwrap();
        let plan = SamplingPlan::unit(5, vec![2]).unwrap();
        let f = factor(&k, &plan, 0.0).unwrap();
        let mut e = Mat::<f64>::zeros(5, 5);
        e[(2, 2)] = 1.0;
        assert!(max_abs((f.dense() - &e).as_ref()) < 1e-15);
        let v = f.apply(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(v, vec![0.0, 0.0, 3.0, 0.0, 0.0]);
    }

    #[test]
    fn apply_matches_dense_formula() {
        let k = random_psd(8, 8, 21);
        let d = SamplingDistribution::uniform(8);
        let plan = sample(&d, 4, 6).unwrap();
        let f = factor(&k, &plan, 0.05).unwrap();
        let s = plan.dense_matrix();
        let ks = k.as_ref() * &s;
        let w = s.transpose() * &ks + Mat::<f64>::identity(4, 4) * (8.0 * 0.05);
        let l = &ks * dense_pinv(w.as_ref()) * ks.transpose();
        assert!(max_abs((f.dense() - &l).as_ref()) < 1e-12);
        let v: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let got = f.apply(&v).unwrap();
        let vm = MatRef::from_column_major_slice(&v, 8, 1);
        let want = &l * vm;
        for i in 0..8 {
            assert!((got[i] - want[(i, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn psd_ordering_on_small_instance() {
        let k = random_psd(12, 12, 2);
        let d = SamplingDistribution::uniform(12);
        let plan = sample(&d, 6, 9).unwrap();
        let l = factor(&k, &plan, 0.0).unwrap().dense();
        let lg = factor(&k, &plan, 0.1).unwrap().dense();
        let nk = crate::linalg::spectral_norm(k.as_ref()).unwrap();
        assert!(min_eigenvalue((k.as_ref() - &l).as_ref()).unwrap() >= -1e-8 * nk);
        assert!(min_eigenvalue((&l - &lg).as_ref()).unwrap() >= -1e-8 * nk);
    }
}
