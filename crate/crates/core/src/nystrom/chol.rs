use std::collections::HashSet;

use faer::{Mat, MatMut, MatRef, Side};

use crate::error::{Error, Result};
use crate::kernels::{center_vector, ColumnOracle};
use crate::linalg::{dot, Growable};

/// Landmarks whose Schur complement falls below this fraction of their own
/// diagonal entry are rejected.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-10;

/// How the border of the grown factor is computed in a step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BorderRule {
    /// Triangular solve for the new column of `R`.
    #[default]
    Triangular,
    /// Zero padding followed by one rank-one update and one rank-one
    /// downdate.
    UpdateDowndate,
}

/// Outcome of a successful step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    /// Squared new pivot over the new diagonal entry of `G`.
    pub relative_pivot: f64,
    /// Whether the factor had to be rebuilt from scratch.
    pub refactored: bool,
}

/// Incremental Cholesky factor of `G = N λ S^T K S + S^T K H K S`.
///
/// The upper factor `R` is stored transposed, one row of `R` per column.
#[derive(Clone, Debug)]
pub struct CholState {
    n: usize,
    lambda: f64,
    pivot_tol: f64,
    border_rule: BorderRule,
    a: Growable,
    rt: Growable,
    w: Growable,
    indices: Vec<usize>,
    weights: Vec<f64>,
    seen: HashSet<usize>,
    refactorizations: usize,
}

/// Centered, weighted column `s H k_i` and the raw column `k_i`.
fn landmark_column(oracle: &dyn ColumnOracle, i: usize, s: f64) -> Result<(Vec<f64>, Vec<f64>)> {
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
    let raw = oracle.column(i);
    let mut a = raw.clone();
    center_vector(&mut a);
    a.iter_mut().for_each(|v| *v *= s);
    Ok((a, raw))
}

impl CholState {
    /// Empty state; the first landmark is added with [`CholState::step`].
    pub fn empty(n: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("must be positive, got {lambda}")));
        }
        Ok(Self {
            n,
            lambda,
            pivot_tol: DEFAULT_PIVOT_TOL,
            border_rule: BorderRule::default(),
            a: Growable::new(n, 0),
            rt: Growable::new(0, 0),
            w: Growable::new(0, 0),
            indices: Vec::new(),
            weights: Vec::new(),
            seen: HashSet::new(),
            refactorizations: 0,
        })
    }

    /// State holding the single landmark `i1` with weight `s1`.
    pub fn init(oracle: &dyn ColumnOracle, i1: usize, s1: f64, lambda: f64) -> Result<Self> {
        let mut st = Self::empty(oracle.n(), lambda)?;
        st.step(oracle, i1, s1)?;
        Ok(st)
    }

    pub fn with_pivot_tol(mut self, tol: f64) -> Self {
        self.pivot_tol = tol;
        self
    }

    pub fn set_pivot_tol(&mut self, tol: f64) {
        self.pivot_tol = tol;
    }

    pub fn with_border_rule(mut self, rule: BorderRule) -> Self {
        self.border_rule = rule;
        self
    }

    pub fn border_rule(&self) -> BorderRule {
        self.border_rule
    }

    pub fn pivot_tol(&self) -> f64 {
        self.pivot_tol
    }

    pub fn rank(&self) -> usize {
        self.indices.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn refactorizations(&self) -> usize {
        self.refactorizations
    }

    /// `A = H K S`, one accepted landmark per column.
    pub fn a(&self) -> MatRef<'_, f64> {
        self.a.as_ref()
    }

    /// Column `j` of `A`.
    pub fn a_col(&self, j: usize) -> &[f64] {
        self.a.col(j)
    }

    /// Upper-triangular factor `R`.
    pub fn r(&self) -> MatRef<'_, f64> {
        self.rt.as_ref().transpose()
    }

    /// Dense `G` assembled from the cached landmark data.
    pub fn gram_target(&self) -> Mat<f64> {
        let nl = self.n as f64 * self.lambda;
        let ata = self.a.as_ref().transpose() * self.a.as_ref();
        Mat::from_fn(self.rank(), self.rank(), |i, j| {
            nl * self.w.as_ref()[(i, j)] + ata[(i, j)]
        })
    }

    /// Adds landmark `i` with weight `s`. On error the state is unchanged.
    pub fn step(&mut self, oracle: &dyn ColumnOracle, i: usize, s: f64) -> Result<StepInfo> {
        if oracle.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: oracle.n(),
            });
        }
        if self.seen.contains(&i) {
            return Err(Error::RejectedLandmark {
                index: i,
                relative_pivot: 0.0,
            });
        }
        let (a_new, raw) = landmark_column(oracle, i, s)?;
        let m = self.rank();
        let nl = self.n as f64 * self.lambda;
        let b: Vec<f64> = (0..m).map(|j| s * self.weights[j] * raw[self.indices[j]]).collect();
        let d = dot(&a_new, &a_new) + nl * s * s * raw[i];
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::RejectedLandmark {
                index: i,
                relative_pivot: 0.0,
            });
        }
        let c: Vec<f64> = (0..m).map(|j| dot(self.a.col(j), &a_new) + nl * b[j]).collect();

        let info = if m == 0 {
            self.rt.resize(1, 1);
            self.rt.mat_mut()[(0, 0)] = d.sqrt();
            StepInfo {
                relative_pivot: 1.0,
                refactored: false,
            }
        } else {
            let backup = self.rt.mat().clone();
            let grown = match self.border_rule {
                BorderRule::Triangular => self.grow_bordered(&backup, &c, d),
                BorderRule::UpdateDowndate => self.grow_factor(&c, d).map(|()| self.keep_leading_block(&backup)),
            };
            match grown {
                Ok(()) => {
                    let piv = self.rt.mat()[(m, m)];
                    let rel = piv * piv / d;
                    if rel < self.pivot_tol {
                        self.restore(&backup);
                        return Err(Error::RejectedLandmark {
                            index: i,
                            relative_pivot: rel,
                        });
                    }
                    StepInfo {
                        relative_pivot: rel,
                        refactored: false,
                    }
                }
                Err(Error::DowndateFailed { row }) if row == m => {
                    self.restore(&backup);
                    return Err(Error::RejectedLandmark {
                        index: i,
                        relative_pivot: 0.0,
                    });
                }
                Err(_) => {
                    self.restore(&backup);
                    match self.dense_refactor(&a_new, &b, s, raw[i]) {
                        Ok(rel) if rel >= self.pivot_tol => {
                            self.refactorizations += 1;
                            StepInfo {
                                relative_pivot: rel,
                                refactored: true,
                            }
                        }
                        Ok(rel) => {
                            self.restore(&backup);
                            return Err(Error::RejectedLandmark {
                                index: i,
                                relative_pivot: rel,
                            });
                        }
                        Err(_) => {
                            self.restore(&backup);
                            return Err(Error::RejectedLandmark {
                                index: i,
                                relative_pivot: 0.0,
                            });
                        }
                    }
                }
            }
        };

        self.a.push_col(&a_new);
        self.w.resize(m + 1, m + 1);
        for (j, &bj) in b.iter().enumerate() {
            self.w.mat_mut()[(j, m)] = bj;
            self.w.mat_mut()[(m, j)] = bj;
        }
        self.w.mat_mut()[(m, m)] = s * s * raw[i];
        self.indices.push(i);
        self.weights.push(s);
        self.seen.insert(i);
        Ok(info)
    }

    /// Removes the most recently accepted landmark; the leading block of the
    /// factor is already the factor of the smaller problem.
    pub fn pop_last(&mut self) -> Option<usize> {
        let i = self.indices.pop()?;
        self.weights.pop();
        self.seen.remove(&i);
        let m = self.indices.len();
        self.a.resize(self.n, m);
        self.rt.resize(m, m);
        self.w.resize(m, m);
        Some(i)
    }

    /// The leading block of the grown factor is the previous factor; only
    /// the new border is taken from the update and downdate.
    fn keep_leading_block(&mut self, backup: &Mat<f64>) {
        let m = backup.nrows();
        for j in 0..m {
            self.rt.col_mut(j)[j..m].copy_from_slice(&backup.col_as_slice(j)[j..]);
        }
    }

    fn restore(&mut self, backup: &Mat<f64>) {
        let m = backup.nrows();
        self.rt.resize(m, m);
        for j in 0..m {
            self.rt.col_mut(j)[j..].copy_from_slice(&backup.col_as_slice(j)[j..]);
        }
    }

    /// Appends the border `r = R^{-T} c`, `sqrt(d - |r|^2)`.
    fn grow_bordered(&mut self, lower: &Mat<f64>, c: &[f64], d: f64) -> Result<()> {
        let m = c.len();
        let mut r = c.to_vec();
        lower
            .as_ref()
            .solve_lower_triangular_in_place(MatMut::from_column_major_slice_mut(&mut r, m, 1));
        let schur = d - dot(&r, &r);
        if !(schur > 0.0) {
            return Err(Error::DowndateFailed { row: m });
        }
        self.rt.resize(m + 1, m + 1);
        let rt = self.rt.mat_mut();
        for (k, rk) in r.iter().enumerate() {
            rt[(m, k)] = *rk;
        }
        rt[(m, m)] = schur.sqrt();
        Ok(())
    }

    /// Zero-pads `R` and applies the update with `u = [c/(1+g); g]` followed
    /// by the downdate with `v = [c/(1+g); -1]`, `g = sqrt(1+d)`.
    fn grow_factor(&mut self, c: &[f64], d: f64) -> Result<()> {
        let m = c.len();
        self.rt.resize(m + 1, m + 1);
        let g = (1.0 + d).sqrt();
        let mut u: Vec<f64> = c.iter().map(|v| v / (1.0 + g)).collect();
        let mut v = u.clone();
        u.push(g);
        v.push(-1.0);
        rank_one_update(self.rt.mat_mut(), &mut u);
        rank_one_downdate(self.rt.mat_mut(), &mut v)
    }

    /// Rebuilds `R` from the cached data plus the candidate column; returns
    /// the relative pivot of the new landmark.
    fn dense_refactor(&mut self, a_new: &[f64], b: &[f64], s: f64, kii: f64) -> Result<f64> {
        let m = self.rank();
        let nl = self.n as f64 * self.lambda;
        let old = self.gram_target();
        let mut g = Mat::<f64>::zeros(m + 1, m + 1);
        for j in 0..m {
            for i in 0..m {
                g[(i, j)] = old[(i, j)];
            }
            let v = dot(self.a.col(j), a_new) + nl * b[j];
            g[(j, m)] = v;
            g[(m, j)] = v;
        }
        let d = dot(a_new, a_new) + nl * s * s * kii;
        g[(m, m)] = d;
        let llt = g
            .llt(Side::Lower)
            .map_err(|e| Error::decomposition("cholesky refactorization", e))?;
        let l = llt.L();
        self.rt.resize(m + 1, m + 1);
        for j in 0..=m {
            for i in 0..=m {
                self.rt.mat_mut()[(i, j)] = if i >= j { l[(i, j)] } else { 0.0 };
            }
        }
        let piv = l[(m, m)];
        Ok(piv * piv / d)
    }

    /// `G^{-1} B` by two triangular solves.
    pub fn solve(&self, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if b.nrows() != self.rank() {
            return Err(Error::DimensionMismatch {
                expected: self.rank(),
                got: b.nrows(),
            });
        }
        let mut x = b.to_owned();
        let l = self.rt.as_ref();
        l.solve_lower_triangular_in_place(x.as_mut());
        l.transpose().solve_upper_triangular_in_place(x.as_mut());
        Ok(x)
    }
}

/// `chol_init` in function form.
pub fn chol_init(oracle: &dyn ColumnOracle, i1: usize, s1: f64, lambda: f64) -> Result<CholState> {
    CholState::init(oracle, i1, s1, lambda)
}

/// Rank-one update `R^T R + x x^T` on the stored transpose, Givens form.
/// A zero diagonal entry (from padding) is handled naturally.
pub(crate) fn rank_one_update(rt: &mut Mat<f64>, x: &mut [f64]) {
    let m = x.len();
    for k in 0..m {
        let rkk = rt[(k, k)];
        let xk = x[k];
        let r = rkk.hypot(xk);
        if r == 0.0 {
            continue;
        }
        let c = rkk / r;
        let s = xk / r;
        rt[(k, k)] = r;
        let col = rt.col_as_slice_mut(k);
        for j in k + 1..m {
            let rkj = col[j];
            let xj = x[j];
            col[j] = c * rkj + s * xj;
            x[j] = -s * rkj + c * xj;
        }
    }
}

/// Rank-one downdate `R^T R - x x^T` on the stored transpose (hyperbolic
/// rotations). Fails when a pivot would become non-positive.
pub(crate) fn rank_one_downdate(rt: &mut Mat<f64>, x: &mut [f64]) -> Result<()> {
    let m = x.len();
    for k in 0..m {
        let rkk = rt[(k, k)];
        let xk = x[k];
        let r2 = (rkk - xk) * (rkk + xk);
        if !(r2 > 0.0) || rkk <= 0.0 {
            return Err(Error::DowndateFailed { row: k });
        }
        let r = r2.sqrt();
        let c = r / rkk;
        let s = xk / rkk;
        rt[(k, k)] = r;
        let col = rt.col_as_slice_mut(k);
        for j in k + 1..m {
            let rkj = (col[j] - s * x[j]) / c;
            col[j] = rkj;
            x[j] = c * x[j] - s * rkj;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gram, GramMatrix, KernelSpec};
    use crate::linalg::{mat_from_rows, max_abs};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(n: usize, rank: usize, seed: u64) -> GramMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Mat::from_fn(n, rank, |_, _| rng.random::<f64>() - 0.5);
        GramMatrix::from_mat(&b * b.transpose()).unwrap()
    }

    /// Dense `N λ S^T K S + S^T K H K S` for explicit landmarks and weights.
    fn dense_target(k: &GramMatrix, idx: &[usize], s: &[f64], lambda: f64) -> Mat<f64> {
        let n = k.n();
        let mut sm = Mat::<f64>::zeros(n, idx.len());
        for (j, (&i, &w)) in idx.iter().zip(s).enumerate() {
            sm[(i, j)] = w;
        }
        let h = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64);
        let ks = k.as_ref() * &sm;
        sm.transpose() * &ks * (n as f64 * lambda) + ks.transpose() * &h * &ks
    }

    fn rel_err(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
        max_abs((a - b).as_ref()) / max_abs(b).max(1e-300)
    }

    #[test]
    fn init_example_identity() {
        let k = GramMatrix::from_mat(Mat::identity(2, 2)).unwrap();
        let st = chol_init(&k, 0, 1.0, 1.0).unwrap();
        assert_eq!(st.a_col(0), &[0.5, -0.5]);
        assert!((st.r()[(0, 0)] - 2.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn init_constant_column() {
        let k = GramMatrix::from_mat(Mat::full(4, 4, 1.0)).unwrap();
        let st = chol_init(&k, 2, 1.5, 0.3).unwrap();
        assert!(st.a_col(0).iter().all(|v| v.abs() < 1e-15));
        let d = 4.0 * 0.3 * 1.5 * 1.5 * 1.0;
        assert!((st.r()[(0, 0)].powi(2) - d).abs() < 1e-14);
    }

    #[test]
    fn init_matches_dense_scalar() {
        let k = random_psd(6, 6, 4);
        let st = chol_init(&k, 3, 0.7, 0.05).unwrap();
        let t = dense_target(&k, &[3], &[0.7], 0.05);
        assert!((st.r()[(0, 0)].powi(2) - t[(0, 0)]).abs() < 1e-14 * t[(0, 0)]);
    }

    #[test]
    fn update_downdate_vectors_reconstruct_border() {
        let c = [0.3, -1.2, 0.8];
        let d = 2.7;
        let g = (1.0f64 + d).sqrt();
        let mut u: Vec<f64> = c.iter().map(|v| v / (1.0 + g)).collect();
        let mut v = u.clone();
        u.push(g);
        v.push(-1.0);
        for i in 0..4 {
            for j in 0..4 {
                let val = u[i] * u[j] - v[i] * v[j];
                let want = if i < 3 && j < 3 {
                    0.0
                } else if i == 3 && j == 3 {
                    d
                } else {
                    c[i.min(j)]
                };
                assert!((val - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn two_steps_match_dense_cholesky() {
        let k = random_psd(6, 6, 7);
        let mut st = chol_init(&k, 1, 1.3, 0.02).unwrap();
        st.step(&k, 4, 0.6).unwrap();
        let t = dense_target(&k, &[1, 4], &[1.3, 0.6], 0.02);
        let r = st.r();
        let rtr = r.transpose() * r;
        assert!(rel_err(rtr.as_ref(), t.as_ref()) < 1e-10);
        assert!(r[(0, 0)] > 0.0 && r[(1, 1)] > 0.0 && r[(1, 0)] == 0.0);
    }

    #[test]
    fn border_rules_agree() {
        let k = random_psd(10, 10, 31);
        let mut tri = CholState::empty(10, 0.05).unwrap();
        let mut upd = CholState::empty(10, 0.05)
            .unwrap()
            .with_border_rule(BorderRule::UpdateDowndate);
        assert_eq!(tri.border_rule(), BorderRule::Triangular);
        for (i, w) in [(3, 1.0), (0, 0.4), (7, 2.2), (9, 1.1), (5, 0.8)] {
            tri.step(&k, i, w).unwrap();
            upd.step(&k, i, w).unwrap();
        }
        assert!(rel_err(upd.r(), tri.r()) < 1e-10);
        let t = dense_target(&k, &[3, 0, 7, 9, 5], &[1.0, 0.4, 2.2, 1.1, 0.8], 0.05);
        let r = upd.r();
        assert!(rel_err((r.transpose() * r).as_ref(), t.as_ref()) < 1e-10);
    }

    #[test]
    fn duplicate_landmark_is_rejected_and_state_kept() {
        let k = random_psd(6, 6, 8);
        let mut st = chol_init(&k, 2, 1.0, 0.1).unwrap();
        st.step(&k, 5, 1.0).unwrap();
        let before = st.r().to_owned();
        // the bordered dense matrix is singular, so the error path is expected
        let t = dense_target(&k, &[2, 5, 2], &[1.0, 1.0, 1.0], 0.1);
        assert!(crate::linalg::min_eigenvalue(t.as_ref()).unwrap() < 1e-10 * max_abs(t.as_ref()));
        let err = st.step(&k, 2, 1.0).unwrap_err();
        assert!(matches!(err, Error::RejectedLandmark { index: 2, .. }));
        assert_eq!(st.rank(), 2);
        assert_eq!(max_abs((st.r() - &before).as_ref()), 0.0);
    }

    #[test]
    fn dependent_column_is_rejected() {
        // rank-2 kernel: a third distinct landmark adds nothing
        let k = random_psd(7, 2, 10);
        let mut st = CholState::empty(7, 0.1).unwrap();
        st.step(&k, 0, 1.0).unwrap();
        st.step(&k, 1, 1.0).unwrap();
        let err = st.step(&k, 2, 1.0).unwrap_err();
        assert!(matches!(err, Error::RejectedLandmark { .. }));
        assert_eq!(st.rank(), 2);
    }

    #[test]
    fn pop_last_restores_smaller_factor() {
        let k = random_psd(8, 8, 21);
        let mut st = CholState::init(&k, 2, 1.0, 0.1).unwrap();
        st.step(&k, 5, 0.7).unwrap();
        let before = st.r().to_owned();
        st.step(&k, 1, 1.3).unwrap();
        assert_eq!(st.pop_last(), Some(1));
        assert_eq!(st.rank(), 2);
        assert_eq!(st.indices(), &[2, 5]);
        assert!(max_abs((st.r() - &before).as_ref()) < 1e-12);
        assert!(
            rel_err(
                st.gram_target().as_ref(),
                dense_target(&k, &[2, 5], &[1.0, 0.7], 0.1).as_ref()
            ) < 1e-12
        );
        st.step(&k, 1, 1.3).unwrap();
        assert_eq!(st.rank(), 3);
        st.pop_last();
        st.pop_last();
        st.pop_last();
        assert_eq!(st.pop_last(), None);
    }

    #[test]
    fn solve_examples() {
        let k = random_psd(9, 9, 11);
        let mut st = CholState::empty(9, 0.05).unwrap();
        let idx = [0usize, 3, 5, 8];
        let s = [1.0, 2.0, 0.5, 1.1];
        for (&i, &w) in idx.iter().zip(&s) {
            st.step(&k, i, w).unwrap();
        }
        let r = st.r();
        let rtr = r.transpose() * r;
        let x = st.solve(rtr.as_ref()).unwrap();
        assert!(max_abs((x - Mat::<f64>::identity(4, 4)).as_ref()) < 1e-8);

        let t = dense_target(&k, &idx, &s, 0.05);
        let b = mat_from_rows(&[vec![1.0, 0.0], vec![2.0, 1.0], vec![-1.0, 3.0], vec![0.5, 0.5]]);
        let want = crate::linalg::spd_solve(t.as_ref(), b.as_ref()).unwrap();
        let got = st.solve(b.as_ref()).unwrap();
        assert!(rel_err(got.as_ref(), want.as_ref()) < 1e-8);

        let one = chol_init(&k, 4, 1.0, 0.05).unwrap();
        let g = one.r()[(0, 0)].powi(2);
        let y = one.solve(mat_from_rows(&[vec![3.0]]).as_ref()).unwrap();
        assert!((y[(0, 0)] - 3.0 / g).abs() < 1e-14);
        assert!(one.solve(Mat::<f64>::zeros(2, 1).as_ref()).is_err());
    }

    #[test]
    fn incremental_equals_batch_on_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Mat::from_fn(60, 2, |_, _| rng.random::<f64>() * 5.0);
        let k = gram(&KernelSpec::rbf(1.0).unwrap(), x.as_ref());
        let mut st = CholState::empty(60, 1e-3).unwrap();
        let mut idx = Vec::new();
        let mut s = Vec::new();
        for j in 0..25 {
            let i = (j * 7) % 60;
            let w = 1.0 + (j as f64 * 0.37).sin().abs();
            if st.step(&k, i, w).is_ok() {
                idx.push(i);
                s.push(w);
            }
        }
        let t = dense_target(&k, &idx, &s, 1e-3);
        let r = st.r();
        assert!(rel_err((r.transpose() * r).as_ref(), t.as_ref()) < 1e-8);
        assert!(rel_err(st.gram_target().as_ref(), t.as_ref()) < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn factor_stays_valid(seed in 0u64..5000, steps in 1usize..12, lambda in 1e-3f64..1.0, updown in any::<bool>()) {
            let k = random_psd(12, 12, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let rule = if updown { BorderRule::UpdateDowndate } else { BorderRule::Triangular };
            let mut st = CholState::empty(12, lambda).unwrap().with_border_rule(rule);
            for _ in 0..steps {
                let i = rng.random_range(0..12);
                let w = rng.random_range(0.2..3.0);
                let before = st.r().to_owned();
                match st.step(&k, i, w) {
                    Ok(_) => {}
                    Err(_) => prop_assert_eq!(max_abs((st.r() - &before).as_ref()), 0.0),
                }
            }
            let r = st.r();
            for j in 0..st.rank() {
                prop_assert!(r[(j, j)] > 0.0);
            }
            let t = dense_target(&k, st.indices(), st.weights(), lambda);
            prop_assert!(rel_err((r.transpose() * r).as_ref(), t.as_ref()) < 1e-8);
        }
    }
}
