//! Exact and Nyström kernel CCA, out-of-sample projections and model records.
//!
//! Projections are `f(x) = k(x)^T H alpha` with `k(x)` the exact kernel
//! affinities of `x` to the training points. The additive constant that the
//! full centered mapping carries is dropped, so projections are defined up to
//! a per-dimension shift. Every downstream metric here is shift invariant.

mod exact;
mod path;
mod record;

pub use exact::{exact_kcca, exact_solution, ExactSolution};
pub use path::{nkcca_coefficients, nkcca_fit, nkcca_fit_restart, nkcca_restart_at, NkccaPath, ViewProgress};

use faer::Mat;

use crate::error::{Error, Result};
use crate::kernels::{center_vector, ColumnOracle, KernelData};

/// Which view a projection refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum View {
    X,
    Y,
}

/// Landmark indices and the weights they entered the factorization with.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Landmarks {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// A fitted (exact or Nyström) KCCA solution.
#[derive(Clone, Debug)]
pub struct KccaModel {
    pub lambda1: f64,
    pub lambda2: f64,
    pub l: usize,
    /// Top `l` canonical correlations, nonincreasing.
    pub rho: Vec<f64>,
    /// Unit left singular vectors, `N x l`.
    pub alpha_prime: Mat<f64>,
    /// Unit right singular vectors, `N x l`.
    pub beta_prime: Mat<f64>,
    pub alpha: Option<Mat<f64>>,
    pub beta: Option<Mat<f64>>,
    /// Training inputs and kernels of both views, needed for projection.
    pub training: Option<[KernelData; 2]>,
    /// Accepted landmarks per view; empty for exact models.
    pub landmarks: [Landmarks; 2],
}

/// One solution along a rank path.
#[derive(Clone, Debug)]
pub struct RankPathEntry {
    /// Number of sampled columns consumed per view.
    pub m1: usize,
    pub m2: usize,
    /// Number of landmarks accepted into the factorizations.
    pub rank1: usize,
    pub rank2: usize,
    pub rho_tilde: Vec<f64>,
    pub model: KccaModel,
    /// Seconds from the start of the path until this entry was solved.
    pub wall_time_incremental: Option<f64>,
    /// Seconds a fresh, non-incremental fit at this rank took.
    pub wall_time_restart: Option<f64>,
}

impl KccaModel {
    pub fn n(&self) -> usize {
        self.alpha_prime.nrows()
    }

    /// Attaches training inputs so the model can project new points.
    pub fn with_training(mut self, x: KernelData, y: KernelData) -> Self {
        self.training = Some([x, y]);
        self
    }

    pub fn coefficients(&self, view: View) -> Result<&Mat<f64>> {
        match view {
            View::X => self.alpha.as_ref().ok_or(Error::MissingModelPart("alpha coefficients")),
            View::Y => self.beta.as_ref().ok_or(Error::MissingModelPart("beta coefficients")),
        }
    }

    /// `[f_1(x), ..., f_l(x)]` for a new point of the given view.
    pub fn project(&self, view: View, x: &[f64]) -> Result<Vec<f64>> {
        let coef = self.coefficients(view)?;
        let data = self.training_view(view)?;
        if data.n() != coef.nrows() {
            return Err(Error::DimensionMismatch {
                expected: coef.nrows(),
                got: data.n(),
            });
        }
        let mut k = data.affinities(x)?;
        center_vector(&mut k);
        Ok((0..coef.ncols())
            .map(|l| crate::linalg::dot(&k, coef.col_as_slice(l)))
            .collect())
    }

    /// Projections of every row of `x`, one row per point.
    pub fn project_rows(&self, view: View, x: faer::MatRef<'_, f64>) -> Result<Mat<f64>> {
        let coef = self.coefficients(view)?;
        let mut out = Mat::zeros(x.nrows(), coef.ncols());
        let mut row = vec![0.0; x.ncols()];
        for i in 0..x.nrows() {
            for (j, r) in row.iter_mut().enumerate() {
                *r = x[(i, j)];
            }
            let p = self.project(view, &row)?;
            for (l, v) in p.into_iter().enumerate() {
                out[(i, l)] = v;
            }
        }
        Ok(out)
    }

    fn training_view(&self, view: View) -> Result<&KernelData> {
        let t = self.training.as_ref().ok_or(Error::MissingModelPart("training data"))?;
        Ok(match view {
            View::X => &t[0],
            View::Y => &t[1],
        })
    }

    pub fn to_record(&self) -> String {
        record::write(self)
    }

    pub fn from_record(text: &str) -> Result<Self> {
        record::read(text)
    }
}

/// Projection of a model onto one view, `f(x) = k^T H alpha`.
pub fn project(model: &KccaModel, x_new: &[f64], view: View) -> Result<Vec<f64>> {
    model.project(view, x_new)
}

/// Sample Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let scale = saa.sqrt() * sbb.sqrt();
    let tiny = 1e-14 * n * (ma.abs().max(mb.abs()).max(1e-300)).powi(2);
    if !(saa > tiny && sbb > tiny && scale > 0.0) {
        return None;
    }
    Some((sab / scale).clamp(-1.0, 1.0))
}

/// `sum_l |corr(f_l, g_l)|` over the columns of two projection matrices whose
/// rows are paired test points. Zero-variance columns contribute 0.
pub fn total_correlation(fx: faer::MatRef<'_, f64>, gy: faer::MatRef<'_, f64>) -> Result<f64> {
    if fx.nrows() != gy.nrows() {
        return Err(Error::DimensionMismatch {
            expected: fx.nrows(),
            got: gy.nrows(),
        });
    }
    if fx.ncols() != gy.ncols() {
        return Err(Error::DimensionMismatch {
            expected: fx.ncols(),
            got: gy.ncols(),
        });
    }
    if fx.ncols() < 1 {
        return Err(Error::invalid("L", "need at least one projection dimension"));
    }
    if fx.nrows() < 2 {
        return Err(Error::invalid("test set", "need at least two pairs"));
    }
    let mut total = 0.0;
    for l in 0..fx.ncols() {
        let a: Vec<f64> = (0..fx.nrows()).map(|i| fx[(i, l)]).collect();
        let b: Vec<f64> = (0..gy.nrows()).map(|i| gy[(i, l)]).collect();
        total += pearson(&a, &b).map_or(0.0, f64::abs);
    }
    Ok(total)
}
