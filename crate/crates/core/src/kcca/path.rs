use std::collections::HashSet;
use std::time::Instant;

use faer::{Mat, MatRef, Scale};

use super::exact::{check_l, check_lambda};
use super::{KccaModel, Landmarks, RankPathEntry};
use crate::error::{Error, Result};
use crate::kernels::{center_vector, ColumnOracle};
use crate::linalg::{dot, normalize_signs, Growable};
use crate::nystrom::{QrState, WhitenedState, LANDMARK_TOL};
use crate::sampling::SamplingPlan;

/// Bookkeeping for one view of a rank path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ViewProgress {
    /// Draws taken from the plan so far.
    pub consumed: usize,
    /// Landmarks in the factorization.
    pub accepted: usize,
    /// Draws turned away as duplicates or numerically dependent.
    pub rejected: usize,
}

struct ViewState<'a> {
    oracle: &'a dyn ColumnOracle,
    plan: &'a SamplingPlan,
    unscaled: Vec<f64>,
    fac: WhitenedState,
    qr: QrState,
    consumed: usize,
    rejected: usize,
}

/// Incremental Nyström KCCA along increasing landmark counts.
///
/// Each view keeps a [`WhitenedState`] with whitened columns `Ψ` and a thin
/// QR `Ψ = Q P`, and the pair shares the core matrix `Ψ1ᵀ Ψ2`. Then
/// `(L̄ + NλI)^{-1} L̄ = Ψ Ψᵀ` and `T̃ = Ψ1 Ψ1ᵀ Ψ2 Ψ2ᵀ`.
/// Landmarks enter with weights `1/sqrt(p_i)`; the common `1/sqrt(M)`
/// factor cancels in every quantity computed here.
pub struct NkccaPath<'a> {
    views: [ViewState<'a>; 2],
    lambdas: [f64; 2],
    core: Growable,
    l: usize,
}

impl<'a> NkccaPath<'a> {
    pub fn new(
        views: [&'a dyn ColumnOracle; 2],
        plans: [&'a SamplingPlan; 2],
        lambdas: [f64; 2],
        l: usize,
    ) -> Result<Self> {
        check_lambda("lambda1", lambdas[0])?;
        check_lambda("lambda2", lambdas[1])?;
        let n = views[0].n();
        if views[1].n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: views[1].n(),
            });
        }
        check_l(l, n)?;
        let mk = |v: usize| -> Result<ViewState<'a>> {
            if plans[v].n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: plans[v].n(),
                });
            }
            Ok(ViewState {
                oracle: views[v],
                plan: plans[v],
                unscaled: plans[v].unscaled_weights(),
                fac: WhitenedState::new(n, lambdas[v])?,
                qr: QrState::new(n),
                consumed: 0,
                rejected: 0,
            })
        };
        Ok(Self {
            views: [mk(0)?, mk(1)?],
            lambdas,
            core: Growable::new(0, 0),
            l,
        })
    }

    pub fn with_landmark_tol(mut self, tol: f64) -> Self {
        for v in &mut self.views {
            v.fac.set_tol(tol);
        }
        self
    }

    pub fn n(&self) -> usize {
        self.views[0].oracle.n()
    }

    pub fn progress(&self, view: usize) -> ViewProgress {
        let v = &self.views[view];
        ViewProgress {
            consumed: v.consumed,
            accepted: v.fac.rank(),
            rejected: v.rejected,
        }
    }

    pub fn factor(&self, view: usize) -> &WhitenedState {
        &self.views[view].fac
    }

    /// Thin QR of the whitened columns `Ψ`.
    pub fn qr(&self, view: usize) -> &QrState {
        &self.views[view].qr
    }

    pub fn psi(&self, view: usize) -> MatRef<'_, f64> {
        self.views[view].fac.psi()
    }

    /// Core matrix `Ψ1ᵀ Ψ2`.
    pub fn core(&self) -> MatRef<'_, f64> {
        self.core.as_ref()
    }

    /// Consumes plan draws until `m1` and `m2` draws have been taken.
    pub fn advance_to(&mut self, m1: usize, m2: usize) -> Result<()> {
        for (v, target) in [(0, m1), (1, m2)] {
            let st = &self.views[v];
            if target < st.consumed {
                return Err(Error::invalid(
                    "checkpoint",
                    format!("{target} is below the {} draws already taken", st.consumed),
                ));
            }
            if target > st.plan.len() {
                return Err(Error::invalid(
                    "checkpoint",
                    format!("{target} exceeds the {} planned draws", st.plan.len()),
                ));
            }
        }
        for (v, target) in [(0, m1), (1, m2)] {
            while self.views[v].consumed < target {
                self.consume(v)?;
            }
        }
        Ok(())
    }

    fn consume(&mut self, v: usize) -> Result<()> {
        let st = &mut self.views[v];
        let j = st.consumed;
        let i = st.plan.indices[j];
        let s = st.unscaled[j];
        st.consumed += 1;
        match st.fac.step(st.oracle, i, s) {
            Ok(_) => {}
            Err(Error::RejectedLandmark { .. }) => {
                st.rejected += 1;
                return Ok(());
            }
            Err(e) => return Err(e),
        }
        let m = st.fac.rank();
        let psi: Vec<f64> = st.fac.psi().col(m - 1).iter().copied().collect();
        st.qr.append(&psi)?;
        let n = psi.len();
        let cross = self.views[1 - v].fac.psi().transpose() * MatRef::from_column_major_slice(&psi, n, 1);
        let (r, c) = (self.core.nrows(), self.core.ncols());
        if v == 0 {
            self.core.resize(r + 1, c);
            for k in 0..c {
                self.core.mat_mut()[(r, k)] = cross[(k, 0)];
            }
        } else {
            self.core.resize(r, c + 1);
            for k in 0..r {
                self.core.mat_mut()[(k, c)] = cross[(k, 0)];
            }
        }
        Ok(())
    }

    /// `Ψ Ψᵀ x = (L̄ + NλI)^{-1} L̄ x` for one view.
    pub fn projector_apply(&self, view: usize, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        self.views[view].fac.projector_apply(x)
    }

    /// `T̃ x`.
    pub fn t_tilde_apply(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        let y = self.projector_apply(1, x)?;
        self.projector_apply(0, y.as_ref())
    }

    /// `T̃ᵀ x`.
    pub fn t_tilde_apply_t(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        let y = self.projector_apply(0, x)?;
        self.projector_apply(1, y.as_ref())
    }

    /// `T̂ = Q1ᵀ T̃ Q2 = P1 (Ψ1ᵀΨ2) P2ᵀ`.
    pub fn t_hat(&self) -> Result<Mat<f64>> {
        let [v1, v2] = &self.views;
        if v1.fac.rank() == 0 || v2.fac.rank() == 0 {
            return Err(Error::invalid("path", "both views need at least one landmark"));
        }
        Ok(v1.qr.p() * self.core.as_ref() * v2.qr.p().transpose())
    }

    /// Solution at the current position of the path, coefficients included.
    pub fn solve(&self) -> Result<RankPathEntry> {
        let t_hat = self.t_hat()?;
        let [v1, v2] = &self.views;
        let mut model = model_from_core(t_hat, v1.qr.q(), v2.qr.q(), self.lambdas, self.l)?;
        model.landmarks = [landmarks_of(&v1.fac), landmarks_of(&v2.fac)];
        let model = self.coefficients(model)?;
        Ok(RankPathEntry {
            m1: v1.consumed,
            m2: v2.consumed,
            rank1: v1.fac.rank(),
            rank2: v2.fac.rank(),
            rho_tilde: model.rho.clone(),
            model,
            wall_time_incremental: None,
            wall_time_restart: None,
        })
    }

    /// Fills `alpha`, `beta` as `(sqrt(N)/(Nλ)) (α̃′ − Ψ Ψᵀ α̃′)`.
    pub fn coefficients(&self, mut model: KccaModel) -> Result<KccaModel> {
        let n = self.n() as f64;
        let pa = self.projector_apply(0, model.alpha_prime.as_ref())?;
        let pb = self.projector_apply(1, model.beta_prime.as_ref())?;
        model.alpha = Some((&model.alpha_prime - pa) * Scale(n.sqrt() / (n * self.lambdas[0])));
        model.beta = Some((&model.beta_prime - pb) * Scale(n.sqrt() / (n * self.lambdas[1])));
        Ok(model)
    }
}

fn landmarks_of(ch: &WhitenedState) -> Landmarks {
    Landmarks {
        indices: ch.indices().to_vec(),
        weights: ch.weights().to_vec(),
    }
}

/// `L^{-1} B` for lower-triangular `L`.
fn lower_solve(l: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut x = b.to_owned();
    l.solve_lower_triangular_in_place(x.as_mut());
    x
}

fn projector(phi: MatRef<'_, f64>, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if x.nrows() != phi.nrows() {
        return Err(Error::DimensionMismatch {
            expected: phi.nrows(),
            got: x.nrows(),
        });
    }
    if phi.ncols() == 0 {
        return Ok(Mat::zeros(x.nrows(), x.ncols()));
    }
    Ok(phi * (phi.transpose() * x))
}

/// SVD of `T̂` mapped back through the orthonormal bases.
fn model_from_core(
    t_hat: Mat<f64>,
    q1: MatRef<'_, f64>,
    q2: MatRef<'_, f64>,
    lambdas: [f64; 2],
    l: usize,
) -> Result<KccaModel> {
    let k = t_hat.nrows().min(t_hat.ncols());
    if l > k {
        return Err(Error::invalid("L", format!("exceeds the approximation rank {k}")));
    }
    let svd = t_hat
        .thin_svd()
        .map_err(|e| Error::decomposition("svd of the core problem", e))?;
    let s = svd.S().column_vector();
    let mut alpha_prime = q1 * svd.U().subcols(0, l);
    let mut beta_prime = q2 * svd.V().subcols(0, l);
    normalize_signs(&mut alpha_prime, &mut [&mut beta_prime]);
    Ok(KccaModel {
        lambda1: lambdas[0],
        lambda2: lambdas[1],
        l,
        rho: (0..l).map(|i| s[i]).collect(),
        alpha_prime,
        beta_prime,
        alpha: None,
        beta: None,
        training: None,
        landmarks: Default::default(),
    })
}

fn check_checkpoints(checkpoints: &[usize], plans: [&SamplingPlan; 2]) -> Result<()> {
    if checkpoints.is_empty() {
        return Err(Error::invalid("checkpoints", "empty list"));
    }
    if checkpoints[0] < 1 || checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "checkpoints",
            "must be positive and strictly increasing",
        ));
    }
    let last = *checkpoints.last().expect("nonempty");
    let avail = plans[0].len().min(plans[1].len());
    if last > avail {
        return Err(Error::invalid(
            "checkpoints",
            format!("{last} exceeds the {avail} planned draws"),
        ));
    }
    Ok(())
}

/// Incremental fit returning one entry per checkpoint (same count for both
/// views). `wall_time_incremental` is cumulative from the start of the path.
pub fn nkcca_fit(
    views: [&dyn ColumnOracle; 2],
    plans: [&SamplingPlan; 2],
    lambdas: [f64; 2],
    l: usize,
    checkpoints: &[usize],
) -> Result<Vec<RankPathEntry>> {
    check_checkpoints(checkpoints, plans)?;
    let start = Instant::now();
    let mut path = NkccaPath::new(views, plans, lambdas, l)?;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &m in checkpoints {
        path.advance_to(m, m)?;
        let mut entry = path.solve()?;
        entry.wall_time_incremental = Some(start.elapsed().as_secs_f64());
        out.push(entry);
    }
    Ok(out)
}

/// Coefficients for an entry produced at the path's current position.
pub fn nkcca_coefficients(path: &NkccaPath<'_>, entry: &RankPathEntry) -> Result<KccaModel> {
    let (p1, p2) = (path.progress(0), path.progress(1));
    if (p1.consumed, p2.consumed) != (entry.m1, entry.m2) {
        return Err(Error::invalid("entry", "the path is no longer at this entry's ranks"));
    }
    path.coefficients(entry.model.clone())
}

/// Non-incremental fit at every checkpoint; `wall_time_restart` holds the
/// time of each individual fit.
pub fn nkcca_fit_restart(
    views: [&dyn ColumnOracle; 2],
    plans: [&SamplingPlan; 2],
    lambdas: [f64; 2],
    l: usize,
    checkpoints: &[usize],
) -> Result<Vec<RankPathEntry>> {
    check_checkpoints(checkpoints, plans)?;
    checkpoints
        .iter()
        .map(|&m| {
            let t = Instant::now();
            let mut e = nkcca_restart_at(views, plans, lambdas, l, m, LANDMARK_TOL)?;
            e.wall_time_restart = Some(t.elapsed().as_secs_f64());
            Ok(e)
        })
        .collect()
}

/// Dense factorizations of one view built from scratch.
struct BatchView {
    psi: Mat<f64>,
    q: Mat<f64>,
    r: Mat<f64>,
    landmarks: Landmarks,
}

/// Left-looking Cholesky of `g` that skips columns whose residual diagonal
/// falls below `tol` times the original one; returns the kept positions and
/// the factor rows.
fn pivoted_cholesky(g: MatRef<'_, f64>, tol: f64) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut keep = Vec::new();
    for j in 0..g.nrows() {
        let gjj = g[(j, j)];
        if !(gjj > 0.0 && gjj.is_finite()) {
            continue;
        }
        let mut row = Vec::with_capacity(keep.len() + 1);
        for (k, &kk) in keep.iter().enumerate() {
            let rk: &Vec<f64> = &rows[k];
            let v = (g[(j, kk)] - dot(&row[..k], &rk[..k])) / rk[k];
            row.push(v);
        }
        let d = gjj - dot(&row, &row);
        if !(d / gjj >= tol) {
            continue;
        }
        row.push(d.sqrt());
        rows.push(row);
        keep.push(j);
    }
    (keep, rows)
}

impl BatchView {
    fn build(oracle: &dyn ColumnOracle, plan: &SamplingPlan, m: usize, lambda: f64, tol: f64) -> Result<Self> {
        let n = oracle.n();
        let unscaled = plan.unscaled_weights();
        let mut seen = HashSet::new();
        let mut idx = Vec::new();
        let mut w = Vec::new();
        for j in 0..m {
            if seen.insert(plan.indices[j]) {
                idx.push(plan.indices[j]);
                w.push(unscaled[j]);
            }
        }
        let c = idx.len();
        let mut raw = Mat::<f64>::zeros(n, c);
        for j in 0..c {
            oracle.column_into(idx[j], raw.col_as_slice_mut(j));
        }
        let kss = Mat::from_fn(c, c, |p, q| raw[(idx[p], q)]);
        let (keep, rows) = pivoted_cholesky(kss.as_ref(), tol);
        let r = keep.len();
        let lw = Mat::from_fn(r, r, |p, q| if q <= p { rows[p][q] } else { 0.0 });
        let ck = Mat::from_fn(n, r, |p, q| raw[(p, keep[q])]);
        let mut f = lower_solve(lw.as_ref(), ck.transpose()).transpose().to_owned();
        for j in 0..r {
            center_vector(f.col_as_slice_mut(j));
        }
        let mut mm = f.transpose() * &f;
        for j in 0..r {
            mm[(j, j)] += n as f64 * lambda;
        }
        let psi = if r == 0 {
            Mat::zeros(n, 0)
        } else {
            let llt = mm
                .llt(faer::Side::Lower)
                .map_err(|e| Error::decomposition("cholesky of the whitening matrix", e))?;
            lower_solve(llt.L(), f.transpose()).transpose().to_owned()
        };
        let (q, rr) = if r == 0 {
            (Mat::zeros(n, 0), Mat::zeros(0, 0))
        } else {
            let qr = psi.qr();
            (qr.compute_thin_Q(), qr.thin_R().to_owned())
        };
        Ok(Self {
            psi,
            q,
            r: rr,
            landmarks: Landmarks {
                indices: keep.iter().map(|&k| idx[k]).collect(),
                weights: keep.iter().map(|&k| w[k]).collect(),
            },
        })
    }
}

/// Fresh fit from the first `m` draws of each plan using dense Gram
/// factorizations and Householder QR.
pub fn nkcca_restart_at(
    views: [&dyn ColumnOracle; 2],
    plans: [&SamplingPlan; 2],
    lambdas: [f64; 2],
    l: usize,
    m: usize,
    landmark_tol: f64,
) -> Result<RankPathEntry> {
    check_lambda("lambda1", lambdas[0])?;
    check_lambda("lambda2", lambdas[1])?;
    let n = views[0].n();
    if views[1].n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: views[1].n(),
        });
    }
    check_l(l, n)?;
    check_checkpoints(&[m], plans)?;
    let b1 = BatchView::build(views[0], plans[0], m, lambdas[0], landmark_tol)?;
    let b2 = BatchView::build(views[1], plans[1], m, lambdas[1], landmark_tol)?;
    if b1.psi.ncols() == 0 || b2.psi.ncols() == 0 {
        return Err(Error::invalid("path", "both views need at least one landmark"));
    }
    let core = b1.psi.transpose() * &b2.psi;
    let t_hat = &b1.r * core * b2.r.transpose();
    let mut model = model_from_core(t_hat, b1.q.as_ref(), b2.q.as_ref(), lambdas, l)?;
    let nf = n as f64;
    let pa = projector(b1.psi.as_ref(), model.alpha_prime.as_ref())?;
    let pb = projector(b2.psi.as_ref(), model.beta_prime.as_ref())?;
    model.alpha = Some((&model.alpha_prime - pa) * Scale(nf.sqrt() / (nf * lambdas[0])));
    model.beta = Some((&model.beta_prime - pb) * Scale(nf.sqrt() / (nf * lambdas[1])));
    let (rank1, rank2) = (b1.psi.ncols(), b2.psi.ncols());
    model.landmarks = [b1.landmarks, b2.landmarks];
    Ok(RankPathEntry {
        m1: m,
        m2: m,
        rank1,
        rank2,
        rho_tilde: model.rho.clone(),
        model,
        wall_time_incremental: None,
        wall_time_restart: None,
    })
}
