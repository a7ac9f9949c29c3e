//! Random Fourier feature CCA: per-view random features followed by
//! regularized linear CCA.

use std::f64::consts::PI;

use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::kcca::total_correlation;
use crate::linalg::SymEigen;

/// Random features `sqrt(2/D) cos(W x + b)` approximating an RBF kernel.
#[derive(Clone, Debug)]
pub struct RffMap {
    /// `D x d`, rows drawn from `N(0, sigma^{-2} I)`.
    pub frequencies: Mat<f64>,
    /// Phases drawn from `U[0, 2π]`.
    pub phases: Vec<f64>,
    pub scale: f64,
    pub seed: u64,
}

impl RffMap {
    pub fn new(input_dim: usize, features: usize, sigma: f64, seed: u64) -> Result<Self> {
        if features < 1 {
            return Err(Error::invalid("D", "need at least one feature"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("must be positive, got {sigma}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / sigma).expect("valid normal");
        let frequencies = Mat::from_fn(features, input_dim, |_, _| normal.sample(&mut rng));
        let phases = (0..features).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        Ok(Self {
            frequencies,
            phases,
            scale: (2.0 / features as f64).sqrt(),
            seed,
        })
    }

    pub fn features(&self) -> usize {
        self.phases.len()
    }

    pub fn input_dim(&self) -> usize {
        self.frequencies.ncols()
    }
}

/// `N x D` feature matrix of the rows of `x`.
pub fn rff_features(map: &RffMap, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if x.ncols() != map.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: map.input_dim(),
            got: x.ncols(),
        });
    }
    let proj = x * map.frequencies.transpose();
    Ok(Mat::from_fn(x.nrows(), map.features(), |i, j| {
        map.scale * (proj[(i, j)] + map.phases[j]).cos()
    }))
}

/// Fitted regularized linear CCA.
#[derive(Clone, Debug)]
pub struct LinearCca {
    /// Canonical directions per view, one column per dimension.
    pub wx: Mat<f64>,
    pub wy: Mat<f64>,
    pub mean_x: Vec<f64>,
    pub mean_y: Vec<f64>,
    /// Canonical correlations on the training data, nonincreasing.
    pub correlations: Vec<f64>,
    /// Set when fewer than the requested number of directions were found.
    pub warning: Option<String>,
}

fn column_means(z: MatRef<'_, f64>) -> Vec<f64> {
    let n = z.nrows() as f64;
    (0..z.ncols())
        .map(|j| (0..z.nrows()).map(|i| z[(i, j)]).sum::<f64>() / n)
        .collect()
}

fn centered(z: MatRef<'_, f64>, mean: &[f64]) -> Mat<f64> {
    Mat::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)] - mean[j])
}

/// `(ZᵀZ/N + λI)^{-1/2}` of centered features, pseudo-inverted on a null space.
fn whitener(zc: MatRef<'_, f64>, lambda: f64) -> Result<Mat<f64>> {
    let n = zc.nrows() as f64;
    let d = zc.ncols();
    let cov = zc.transpose() * zc * faer::Scale(1.0 / n) + Mat::<f64>::identity(d, d) * faer::Scale(lambda);
    let e = SymEigen::new(cov.as_ref())?;
    let top = e.values.first().copied().unwrap_or(0.0);
    Ok(e.reconstruct_with(|s| {
        if s > crate::linalg::PINV_RCOND * top {
            1.0 / s.sqrt()
        } else {
            0.0
        }
    }))
}

/// Regularized linear CCA of two feature matrices with paired rows.
pub fn linear_cca(zx: MatRef<'_, f64>, zy: MatRef<'_, f64>, lambda1: f64, lambda2: f64, l: usize) -> Result<LinearCca> {
    let n = zx.nrows();
    if zy.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: zy.nrows(),
        });
    }
    if n < 2 {
        return Err(Error::invalid("N", "need at least two rows"));
    }
    for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::invalid(name, format!("must be nonnegative, got {v}")));
        }
    }
    if l < 1 {
        return Err(Error::invalid("L", "must be at least 1"));
    }
    let mean_x = column_means(zx);
    let mean_y = column_means(zy);
    let xc = centered(zx, &mean_x);
    let yc = centered(zy, &mean_y);
    let wx_half = whitener(xc.as_ref(), lambda1)?;
    let wy_half = whitener(yc.as_ref(), lambda2)?;
    let cxy = xc.transpose() * &yc * faer::Scale(1.0 / n as f64);
    let m = &wx_half * cxy * &wy_half;
    let svd = m
        .thin_svd()
        .map_err(|e| Error::decomposition("svd of whitened cross-covariance", e))?;
    let s = svd.S().column_vector();
    let k = s.nrows();
    let top = if k > 0 { s[0] } else { 0.0 };
    let avail = (0..k).filter(|&i| s[i] > 1e-12 * top.max(1e-300)).count();
    let keep = l.min(avail);
    let warning = (keep < l).then(|| format!("only {keep} of {l} canonical directions are numerically nonzero"));
    Ok(LinearCca {
        wx: &wx_half * svd.U().subcols(0, keep),
        wy: &wy_half * svd.V().subcols(0, keep),
        mean_x,
        mean_y,
        correlations: (0..keep).map(|i| s[i].clamp(0.0, 1.0)).collect(),
        warning,
    })
}

impl LinearCca {
    pub fn dims(&self) -> usize {
        self.correlations.len()
    }

    pub fn transform_x(&self, zx: MatRef<'_, f64>) -> Mat<f64> {
        centered(zx, &self.mean_x) * &self.wx
    }

    pub fn transform_y(&self, zy: MatRef<'_, f64>) -> Mat<f64> {
        centered(zy, &self.mean_y) * &self.wy
    }

    /// Total correlation of the projections of held-out paired features.
    pub fn total_correlation(&self, zx: MatRef<'_, f64>, zy: MatRef<'_, f64>) -> Result<f64> {
        total_correlation(self.transform_x(zx).as_ref(), self.transform_y(zy).as_ref())
    }
}

/// RFF features for both views with independent seeds, then linear CCA.
#[derive(Clone, Debug)]
pub struct Rcca {
    pub maps: [RffMap; 2],
    pub cca: LinearCca,
}

impl Rcca {
    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        x: MatRef<'_, f64>,
        y: MatRef<'_, f64>,
        sigmas: [f64; 2],
        features: usize,
        lambdas: [f64; 2],
        l: usize,
        seed: u64,
    ) -> Result<Self> {
        let mx = RffMap::new(x.ncols(), features, sigmas[0], seed.wrapping_mul(2).wrapping_add(1))?;
        let my = RffMap::new(y.ncols(), features, sigmas[1], seed.wrapping_mul(2).wrapping_add(2))?;
        let zx = rff_features(&mx, x)?;
        let zy = rff_features(&my, y)?;
        let cca = linear_cca(zx.as_ref(), zy.as_ref(), lambdas[0], lambdas[1], l)?;
        Ok(Self { maps: [mx, my], cca })
    }

    pub fn total_correlation(&self, x: MatRef<'_, f64>, y: MatRef<'_, f64>) -> Result<f64> {
        let zx = rff_features(&self.maps[0], x)?;
        let zy = rff_features(&self.maps[1], y)?;
        self.cca.total_correlation(zx.as_ref(), zy.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;

    #[test]
    fn features_are_bounded_and_deterministic() {
        let map = RffMap::new(3, 50, 0.7, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Mat::from_fn(20, 3, |_, _| rng.random::<f64>() * 4.0);
        let z = rff_features(&map, x.as_ref()).unwrap();
        let bound = (2.0f64 / 50.0).sqrt();
        for i in 0..20 {
            let mut sq = 0.0;
            for j in 0..50 {
                assert!(z[(i, j)].abs() <= bound + 1e-15);
                sq += z[(i, j)] * z[(i, j)];
            }
            assert!(sq <= 2.0 + 1e-12);
        }
        let again = rff_features(&RffMap::new(3, 50, 0.7, 4).unwrap(), x.as_ref()).unwrap();
        assert_eq!(z, again);
        assert!(rff_features(&map, x.as_ref().subcols(0, 2)).is_err());
    }

    #[test]
    fn inner_products_approximate_rbf() {
        let map = RffMap::new(2, 10_000, 1.0, 9).unwrap();
        let spec = KernelSpec::rbf(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let a = [rng.random::<f64>(), rng.random::<f64>() * 2.0];
            let b = [rng.random::<f64>() * 2.0, rng.random::<f64>()];
            let x = Mat::from_fn(2, 2, |i, j| if i == 0 { a[j] } else { b[j] });
            let z = rff_features(&map, x.as_ref()).unwrap();
            let ip: f64 = (0..10_000).map(|j| z[(0, j)] * z[(1, j)]).sum();
            assert!((ip - spec.eval(&a, &b).unwrap()).abs() < 0.05);
        }
    }

    #[test]
    fn identical_views_are_fully_correlated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = Mat::from_fn(500, 4, |_, _| rng.random::<f64>());
        let c = linear_cca(z.as_ref(), z.as_ref(), 1e-9, 1e-9, 4).unwrap();
        assert!(c.correlations.iter().all(|r| (r - 1.0).abs() < 1e-3));
        assert!(c.warning.is_none());
    }

    #[test]
    fn independent_views_are_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 20_000;
        let x = Mat::from_fn(n, 3, |_, _| rng.random::<f64>());
        let y = Mat::from_fn(n, 3, |_, _| rng.random::<f64>());
        let c = linear_cca(x.as_ref(), y.as_ref(), 1e-6, 1e-6, 2).unwrap();
        assert!(c.correlations[0] < 0.05);
    }

    #[test]
    fn one_dimensional_linear_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 10_000;
        let x = Mat::from_fn(n, 1, |_, _| normal.sample(&mut rng));
        let y = Mat::from_fn(n, 1, |i, _| 2.0 * x[(i, 0)] + 0.1 * normal.sample(&mut rng));
        let c = linear_cca(x.as_ref(), y.as_ref(), 1e-10, 1e-10, 1).unwrap();
        let analytic = 2.0 / (4.0f64 + 0.01).sqrt();
        assert!((c.correlations[0] - analytic).abs() < 1e-3);
        let fx = c.transform_x(x.as_ref());
        let gy = c.transform_y(y.as_ref());
        let tc = total_correlation(fx.as_ref(), gy.as_ref()).unwrap();
        assert!((tc - c.correlations[0]).abs() < 1e-8);
    }

    #[test]
    fn rank_collapse_reports_fewer_directions() {
        let x = Mat::from_fn(30, 3, |i, j| if j == 0 { i as f64 } else { 0.0 });
        let y = Mat::from_fn(30, 2, |i, _| (i as f64).sin());
        let c = linear_cca(x.as_ref(), y.as_ref(), 0.0, 0.0, 3).unwrap();
        assert!(c.dims() < 3);
        assert!(c.warning.is_some());
        assert!(linear_cca(x.as_ref(), y.as_ref().subrows(0, 5), 0.1, 0.1, 1).is_err());
    }
}
