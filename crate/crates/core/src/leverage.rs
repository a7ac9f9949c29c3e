//! Ridge leverage scores, effective dimension and sampling distributions.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::{ColumnOracle, GramMatrix};
use crate::linalg::{SymEigen, PINV_RCOND};

/// Per-sample ridge leverage scores at regularization `gamma`.
#[derive(Clone, Debug)]
pub struct LeverageScores {
    pub scores: Vec<f64>,
    pub gamma: f64,
    pub d_eff: f64,
    pub exact: bool,
}

/// Column sampling probabilities together with the assumed lower-bound
/// factor relating them to normalized leverage scores.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingDistribution {
    pub p: Vec<f64>,
    pub beta_floor: f64,
}

impl SamplingDistribution {
    pub fn uniform(n: usize) -> Self {
        Self {
            p: vec![1.0 / n as f64; n],
            beta_floor: 1.0,
        }
    }

    /// Builds a distribution from nonnegative weights, applying the
    /// `1e-12 / N` floor and renormalizing.
    pub fn from_weights(w: &[f64], beta_floor: f64) -> Result<Self> {
        let n = w.len();
        if n == 0 {
            return Err(Error::invalid("p", "empty distribution"));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("p", "weights must be finite and nonnegative"));
        }
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateScores);
        }
        let floor = 1e-12 / n as f64;
        let mut p: Vec<f64> = w.iter().map(|v| (v / total).max(floor)).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        Ok(Self { p, beta_floor })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", format!("must be positive, got {gamma}")));
    }
    Ok(())
}

/// Diagonal of `K (K + N gamma I)^{-1}` from a symmetric eigendecomposition.
pub fn exact_leverage(k: &GramMatrix, gamma: f64) -> Result<LeverageScores> {
    check_gamma(gamma)?;
    let n = k.n();
    let ng = n as f64 * gamma;
    let eig = SymEigen::new(k.as_ref())?;
    let phi: Vec<f64> = eig
        .values
        .iter()
        .map(|&s| {
            let s = s.max(0.0);
            s / (s + ng)
        })
        .collect();
    let u = &eig.vectors;
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| phi[j] * u[(i, j)] * u[(i, j)])
                .sum::<f64>()
                .clamp(0.0, 1.0)
        })
        .collect();
    let d_eff = phi.iter().sum();
    Ok(LeverageScores {
        scores,
        gamma,
        d_eff,
        exact: true,
    })
}

/// `trace(K (K + N gamma I)^{-1})`.
pub fn effective_dimension(k: &GramMatrix, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let ng = k.n() as f64 * gamma;
    let ev = crate::linalg::sym_eigenvalues(k.as_ref())?;
    Ok(ev
        .iter()
        .map(|&s| {
            let s = s.max(0.0);
            s / (s + ng)
        })
        .sum())
}

/// Leverage scores of the Nyström surrogate `L = C W^+ C^T` built from
/// `sketch_size` columns drawn uniformly without replacement.
///
/// `L` is handled through a thin factor `B` with `L = B B^T`, so the cost is
/// `O(N s^2)` and the N-by-N surrogate is never formed.
pub fn approx_leverage(oracle: &dyn ColumnOracle, gamma: f64, sketch_size: usize, seed: u64) -> Result<LeverageScores> {
    check_gamma(gamma)?;
    let n = oracle.n();
    if sketch_size == 0 || sketch_size > n {
        return Err(Error::invalid(
            "sketch_size",
            format!("must lie in [1, {n}], got {sketch_size}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, sketch_size).into_vec();
    idx.sort_unstable();

    let s = sketch_size;
    let mut c = Mat::<f64>::zeros(n, s);
    for (j, &i) in idx.iter().enumerate() {
        let col = oracle.column(i);
        for (r, v) in col.into_iter().enumerate() {
            c[(r, j)] = v;
        }
    }
    let w = Mat::from_fn(s, s, |a, b| c[(idx[a], b)]);
    let w = crate::linalg::symmetrize(w.as_ref());
    let eig = SymEigen::new(w.as_ref())?;
    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let keep: Vec<usize> = (0..s).filter(|&j| eig.values[j] > PINV_RCOND * top).collect();
    let k = keep.len();
    let vk = Mat::from_fn(s, k, |a, b| eig.vectors[(a, keep[b])] / eig.values[keep[b]].sqrt());
    let b = &c * &vk;

    let gram_b = crate::linalg::symmetrize((b.transpose() * &b).as_ref());
    let ge = SymEigen::new(gram_b.as_ref())?;
    let bv = &b * &ge.vectors;
    let ng = n as f64 * gamma;
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            (0..k)
                .map(|j| bv[(i, j)] * bv[(i, j)] / (ge.values[j].max(0.0) + ng))
                .sum::<f64>()
                .clamp(0.0, 1.0)
        })
        .collect();
    let d_eff = scores.iter().sum();
    Ok(LeverageScores {
        scores,
        gamma,
        d_eff,
        exact: false,
    })
}

/// Mixes normalized leverage scores with the uniform distribution.
pub fn make_distribution(scores: &LeverageScores, mix_uniform: f64) -> Result<SamplingDistribution> {
    if !(0.0..=1.0).contains(&mix_uniform) {
        return Err(Error::invalid(
            "mix_uniform",
            format!("must lie in [0, 1], got {mix_uniform}"),
        ));
    }
    let n = scores.scores.len();
    if n == 0 {
        return Err(Error::invalid("scores", "empty score vector"));
    }
    let uniform = 1.0 / n as f64;
    if mix_uniform == 1.0 {
        return SamplingDistribution::from_weights(&vec![uniform; n], 1.0);
    }
    if scores.d_eff <= 0.0 || scores.scores.iter().all(|&v| v <= 0.0) {
        return Err(Error::DegenerateScores);
    }
    let w: Vec<f64> = scores
        .scores
        .iter()
        .map(|&l| (1.0 - mix_uniform) * l / scores.d_eff + mix_uniform * uniform)
        .collect();
    SamplingDistribution::from_weights(&w, 1.0 - mix_uniform)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gram, KernelSpec};
    use crate::linalg::{mat_from_rows, spd_solve};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_psd(n: usize, rank: usize, seed: u64) -> GramMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Mat::from_fn(n, rank, |_, _| rng.random::<f64>() - 0.5);
        GramMatrix::from_mat(&b * b.transpose()).unwrap()
    }

    fn dense_scores(k: &GramMatrix, gamma: f64) -> Vec<f64> {
        let n = k.n();
        let reg = Mat::from_fn(n, n, |i, j| {
            k.as_ref()[(i, j)] + if i == j { n as f64 * gamma } else { 0.0 }
        });
        // (K + NgI)^{-1} K has the same diagonal as K (K + NgI)^{-1}
        let x = spd_solve(reg.as_ref(), k.as_ref()).unwrap();
        (0..n).map(|i| x[(i, i)]).collect()
    }

    #[test]
    fn identity_and_zero_kernels() {
        let id = GramMatrix::from_mat(Mat::identity(2, 2)).unwrap();
        let l = exact_leverage(&id, 0.5).unwrap();
        assert!(l.scores.iter().all(|v| (v - 0.5).abs() < 1e-14));
        assert!((l.d_eff - 1.0).abs() < 1e-14);
        let z = GramMatrix::from_mat(Mat::zeros(3, 3)).unwrap();
        let l = exact_leverage(&z, 0.1).unwrap();
        assert!(l.scores.iter().all(|&v| v == 0.0));
        assert_eq!(l.d_eff, 0.0);
        assert!(exact_leverage(&z, 0.0).is_err());
        let id3 = GramMatrix::from_mat(Mat::identity(3, 3)).unwrap();
        assert!((effective_dimension(&id3, 1.0 / 3.0).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn matches_dense_inverse() {
        let k = random_psd(4, 4, 3);
        let l = exact_leverage(&k, 0.1).unwrap();
        let d = dense_scores(&k, 0.1);
        for i in 0..4 {
            assert!((l.scores[i] - d[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn d_eff_matches_eigen_formula() {
        let k = random_psd(5, 5, 8);
        let g = 0.05;
        let ev = crate::linalg::sym_eigenvalues(k.as_ref()).unwrap();
        let expect: f64 = ev.iter().map(|s| s / (s + 5.0 * g)).sum();
        assert!((effective_dimension(&k, g).unwrap() - expect).abs() < 1e-12);
        let l = exact_leverage(&k, g).unwrap();
        assert!((l.d_eff - expect).abs() < 1e-12);
    }

    #[test]
    fn approx_with_full_sketch_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Mat::from_fn(40, 2, |_, _| rng.random::<f64>() * 3.0);
        let k = gram(&KernelSpec::rbf(0.6).unwrap(), x.as_ref());
        let exact = exact_leverage(&k, 1e-3).unwrap();
        let approx = approx_leverage(&k, 1e-3, 40, 5).unwrap();
        assert!(!approx.exact);
        for i in 0..40 {
            assert!((exact.scores[i] - approx.scores[i]).abs() < 1e-6);
        }
        let id = GramMatrix::from_mat(Mat::identity(6, 6)).unwrap();
        let a = approx_leverage(&id, 0.2, 6, 3).unwrap();
        assert!(a.scores.iter().all(|v| (v - a.scores[0]).abs() < 1e-6));
        assert!(approx_leverage(&id, 0.2, 7, 3).is_err());
        assert!(approx_leverage(&id, 0.2, 0, 3).is_err());
    }

    #[test]
    fn approx_is_deterministic_and_below_exact() {
        let k = random_psd(30, 6, 12);
        let a = approx_leverage(&k, 0.01, 10, 77).unwrap();
        let b = approx_leverage(&k, 0.01, 10, 77).unwrap();
        assert_eq!(a.scores, b.scores);
        let e = exact_leverage(&k, 0.01).unwrap();
        for i in 0..30 {
            assert!(a.scores[i] <= e.scores[i] + 1e-10);
        }
    }

    #[test]
    fn distribution_examples() {
        let s = LeverageScores {
            scores: vec![0.2, 0.6, 0.2],
            gamma: 1.0,
            d_eff: 1.0,
            exact: true,
        };
        let d = make_distribution(&s, 0.0).unwrap();
        for (a, b) in d.p.iter().zip([0.2, 0.6, 0.2]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(d.beta_floor, 1.0);
        let d = make_distribution(&s, 0.5).unwrap();
        for (a, b) in d.p.iter().zip([0.8 / 3.0, 1.4 / 3.0, 0.8 / 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(d.beta_floor, 0.5);
        let d = make_distribution(&s, 1.0).unwrap();
        assert!(d.p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let z = LeverageScores {
            scores: vec![0.0; 3],
            gamma: 1.0,
            d_eff: 0.0,
            exact: true,
        };
        assert!(matches!(make_distribution(&z, 0.3), Err(Error::DegenerateScores)));
        assert!(make_distribution(&z, 1.0).is_ok());
    }

    #[test]
    fn scores_are_row_norms_of_scaled_eigenvectors() {
        let k = GramMatrix::from_mat(mat_from_rows(&[
            vec![2.0, 1.0, 0.0],
            vec![1.0, 2.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ]))
        .unwrap();
        let g = 0.2;
        let e = SymEigen::new(k.as_ref()).unwrap();
        let l = exact_leverage(&k, g).unwrap();
        for i in 0..3 {
            let row: f64 = (0..3)
                .map(|j| {
                    let phi = e.values[j] / (e.values[j] + 3.0 * g);
                    (e.vectors[(i, j)] * phi.sqrt()).powi(2)
                })
                .sum();
            assert!((row - l.scores[i]).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn monotone_and_bounded(seed in 0u64..10_000, n in 2usize..25, g1 in 1e-4f64..1.0, f in 1.01f64..10.0) {
            let k = random_psd(n, 1 + (seed as usize % n), seed);
            let g2 = g1 * f;
            let a = exact_leverage(&k, g1).unwrap();
            let b = exact_leverage(&k, g2).unwrap();
            for i in 0..n {
                prop_assert!(a.scores[i] >= b.scores[i] - 1e-12);
                prop_assert!((0.0..=1.0).contains(&a.scores[i]));
            }
            prop_assert!(a.d_eff >= b.d_eff - 1e-12);
            let sum: f64 = a.scores.iter().sum();
            prop_assert!((sum - a.d_eff).abs() <= 1e-8 * a.d_eff.max(1e-300));
            prop_assert!(a.d_eff <= (n as f64).min(k.trace() / (n as f64 * g1)) * (1.0 + 1e-10));
            let d = make_distribution(&a, 0.0).unwrap();
            prop_assert!((d.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
