//! Dense verifiers for the approximation and stability bounds.
//!
//! Everything here forms `N x N` matrices and eigendecompositions, so it is
//! meant for small problems; the default size gate is [`DENSE_LIMIT`].

use std::io::Write;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::kcca::{ExactSolution, KccaModel, View};
use crate::kernels::GramMatrix;
use crate::linalg::{min_eigenvalue, spectral_norm, sym_eigenvalues, sym_spectral_norm, SymEigen};
use crate::nystrom;
use crate::sampling::SamplingPlan;

pub const DENSE_LIMIT: usize = 2000;

/// Outcome of comparing a measured quantity against a bound.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub context: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// False when the bound's preconditions are not met; `holds` is then
    /// false as well and the report must not be counted as a pass.
    pub applicable: bool,
}

impl BoundReport {
    pub fn new(context: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let holds = lhs <= rhs + 1e-8 * rhs.max(1.0);
        Self {
            context: context.into(),
            lhs,
            rhs,
            holds,
            applicable: true,
        }
    }

    pub fn not_applicable(context: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self {
            context: context.into(),
            lhs,
            rhs,
            holds: false,
            applicable: false,
        }
    }

    pub fn passed(&self) -> bool {
        self.applicable && self.holds
    }
}

/// Writes reports as CSV rows `context,lhs,rhs,holds,applicable`.
pub fn write_reports_csv<W: Write>(out: W, reports: &[BoundReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["context", "lhs", "rhs", "holds", "applicable"])?;
    for r in reports {
        w.write_record([
            r.context.clone(),
            r.lhs.to_string(),
            r.rhs.to_string(),
            r.holds.to_string(),
            r.applicable.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn gate(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        return Err(Error::invalid(
            "N",
            format!("dense diagnostics are limited to N <= {DENSE_LIMIT}, got {n}"),
        ));
    }
    Ok(())
}

/// Dense Nyström approximation `K S (SᵀKS + NγI)^+ SᵀK`.
pub fn dense_nystrom(k: &GramMatrix, plan: &SamplingPlan, gamma: f64) -> Result<Mat<f64>> {
    gate(k.n())?;
    if plan.is_empty() {
        return Ok(Mat::zeros(k.n(), k.n()));
    }
    Ok(nystrom::factor(k, plan, gamma)?.dense())
}

/// `M (M + NλI)^{-1}` for a symmetric PSD `M`; tiny negative eigenvalues
/// from rounding are clamped to zero.
pub fn ridge_operator(m: MatRef<'_, f64>, lambda: f64) -> Result<Mat<f64>> {
    let nl = m.nrows() as f64 * lambda;
    let e = SymEigen::new(m)?;
    Ok(e.reconstruct_with(|s| {
        let s = s.max(0.0);
        s / (s + nl)
    }))
}

fn centered(m: &Mat<f64>) -> Result<Mat<f64>> {
    Ok(GramMatrix::from_mat(m.clone())?.centered().into_inner())
}

/// `‖D‖` with `D = Φ − Φ^{1/2} Uᵀ S Sᵀ U Φ^{1/2}`, `Φ = Σ(Σ + NγI)^{-1}`,
/// from the eigendecomposition `K = U Σ Uᵀ`.
pub fn d_matrix_norm(k: &GramMatrix, plan: &SamplingPlan, gamma: f64) -> Result<f64> {
    let n = k.n();
    gate(n)?;
    let e = SymEigen::new(k.as_ref())?;
    let ng = n as f64 * gamma;
    let phi: Vec<f64> = e
        .values
        .iter()
        .map(|&s| {
            let s = s.max(0.0);
            if s + ng > 0.0 {
                s / (s + ng)
            } else {
                0.0
            }
        })
        .collect();
    let mut sts = vec![0.0; n];
    for (&i, &w) in plan.indices.iter().zip(&plan.weights) {
        sts[i] += w * w;
    }
    let scaled = Mat::from_fn(n, n, |r, b| sts[r] * e.vectors[(r, b)]);
    let ut_sts_u = e.vectors.transpose() * &scaled;
    let d = Mat::from_fn(n, n, |a, b| {
        let base = if a == b { phi[a] } else { 0.0 };
        base - phi[a].sqrt() * ut_sts_u[(a, b)] * phi[b].sqrt()
    });
    sym_spectral_norm(d.as_ref())
}

/// Checks `L_γ ⪯ L ⪯ K` through the minimum eigenvalues of `K − L`,
/// `L − L_γ` and `K − L_γ`; `lhs` is the largest negative excursion and
/// `rhs = 1e-8 ‖K‖`.
pub fn psd_ordering_check(k: &GramMatrix, plan: &SamplingPlan, gamma: f64) -> Result<BoundReport> {
    let l = dense_nystrom(k, plan, 0.0)?;
    let lg = dense_nystrom(k, plan, gamma)?;
    let kk = k.as_ref();
    let mins = [
        min_eigenvalue((kk - &l).as_ref())?,
        min_eigenvalue((&l - &lg).as_ref())?,
        min_eigenvalue((kk - &lg).as_ref())?,
    ];
    let lhs = mins.iter().fold(0.0_f64, |m, v| m.max(-v));
    let rhs = 1e-8 * sym_spectral_norm(kk)?;
    Ok(BoundReport::new(
        format!("psd_ordering gamma={gamma} M={}", plan.len()),
        lhs,
        rhs,
    ))
}

/// Largest eigenvalue of `K − L_γ` against `Nγ/(1−t)`, applicable when
/// `‖D‖ ≤ t < 1`.
pub fn lemma1_tail_check(k: &GramMatrix, plan: &SamplingPlan, gamma: f64, t: f64) -> Result<BoundReport> {
    let n = k.n();
    let ctx = format!("lemma1_tail gamma={gamma} t={t} M={}", plan.len());
    let lg = dense_nystrom(k, plan, gamma)?;
    let lhs = sym_eigenvalues((k.as_ref() - &lg).as_ref())?[0];
    let knorm = sym_spectral_norm(k.as_ref())?;
    let rhs = n as f64 * gamma / (1.0 - t) + 1e-8 * knorm;
    if !(t > 0.0 && t < 1.0) || d_matrix_norm(k, plan, gamma)? > t {
        return Ok(BoundReport::not_applicable(ctx, lhs, rhs));
    }
    Ok(BoundReport::new(ctx, lhs, rhs))
}

/// The four ridge-operator errors `{K, K̄} × {L, L_γ}` against `(γ/λ)/(1−t)`;
/// applicable when `t ∈ (0,1)` and `‖D‖ ≤ t`.
pub fn lemma2_check(k: &GramMatrix, plan: &SamplingPlan, gamma: f64, lambda: f64, t: f64) -> Result<BoundReport> {
    let ctx = format!("lemma2 gamma={gamma} lambda={lambda} t={t} M={}", plan.len());
    let rhs = (gamma / lambda) / (1.0 - t);
    let l = dense_nystrom(k, plan, 0.0)?;
    let lg = dense_nystrom(k, plan, gamma)?;
    let kk = k.as_ref().to_owned();
    let mut lhs = 0.0_f64;
    for (base, approx) in [(&kk, &l), (&kk, &lg)] {
        let rk = ridge_operator(base.as_ref(), lambda)?;
        let ra = ridge_operator(approx.as_ref(), lambda)?;
        lhs = lhs.max(sym_spectral_norm((&rk - &ra).as_ref())?);
        let rkc = ridge_operator(centered(base)?.as_ref(), lambda)?;
        let rac = ridge_operator(centered(approx)?.as_ref(), lambda)?;
        lhs = lhs.max(sym_spectral_norm((&rkc - &rac).as_ref())?);
    }
    if !(t > 0.0 && t < 1.0) || d_matrix_norm(k, plan, gamma)? > t {
        return Ok(BoundReport::not_applicable(ctx, lhs, rhs));
    }
    Ok(BoundReport::new(ctx, lhs, rhs))
}

/// Measured terms of the two-view error chain.
#[derive(Clone, Debug)]
pub struct Theorem1Report {
    /// `|ρ − ρ̃|` against `ε = max_v 2γ_v/(λ_v(1−t_v))`.
    pub report: BoundReport,
    pub rho: f64,
    pub rho_tilde: f64,
    /// `‖T − T̃‖`.
    pub t_error: f64,
    /// `‖K̄_v(K̄_v + Nλ_vI)^{-1} − L̄_v(L̄_v + Nλ_vI)^{-1}‖` per view.
    pub view_terms: [f64; 2],
    pub d_norms: [f64; 2],
}

/// Dense `T̃` built from the standard Nyström approximations of both views.
pub fn dense_t_tilde(
    k: [&GramMatrix; 2],
    plans: [&SamplingPlan; 2],
    lambdas: [f64; 2],
) -> Result<(Mat<f64>, [Mat<f64>; 2])> {
    let r1 = ridge_operator(centered(&dense_nystrom(k[0], plans[0], 0.0)?)?.as_ref(), lambdas[0])?;
    let r2 = ridge_operator(centered(&dense_nystrom(k[1], plans[1], 0.0)?)?.as_ref(), lambdas[1])?;
    Ok((&r1 * &r2, [r1, r2]))
}

pub fn theorem1_check(
    k: [&GramMatrix; 2],
    plans: [&SamplingPlan; 2],
    lambdas: [f64; 2],
    gammas: [f64; 2],
    ts: [f64; 2],
) -> Result<Theorem1Report> {
    let n = k[0].n();
    gate(n)?;
    if k[1].n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: k[1].n(),
        });
    }
    let exact: Vec<Mat<f64>> = (0..2)
        .map(|v| ridge_operator(k[v].centered().as_ref(), lambdas[v]))
        .collect::<Result<_>>()?;
    let t = &exact[0] * &exact[1];
    let (t_tilde, approx) = dense_t_tilde(k, plans, lambdas)?;
    let rho = spectral_norm(t.as_ref())?;
    let rho_tilde = spectral_norm(t_tilde.as_ref())?;
    let t_error = spectral_norm((&t - &t_tilde).as_ref())?;
    let view_terms = [
        sym_spectral_norm((&exact[0] - &approx[0]).as_ref())?,
        sym_spectral_norm((&exact[1] - &approx[1]).as_ref())?,
    ];
    let d_norms = [
        d_matrix_norm(k[0], plans[0], gammas[0])?,
        d_matrix_norm(k[1], plans[1], gammas[1])?,
    ];
    let eps = (0..2)
        .map(|v| 2.0 * gammas[v] / (lambdas[v] * (1.0 - ts[v])))
        .fold(0.0_f64, f64::max);
    let ctx = format!(
        "theorem1 gamma=({},{}) lambda=({},{}) t=({},{})",
        gammas[0], gammas[1], lambdas[0], lambdas[1], ts[0], ts[1]
    );
    let lhs = (rho - rho_tilde).abs();
    let ok = (0..2).all(|v| ts[v] > 0.0 && ts[v] < 1.0 && d_norms[v] <= ts[v]);
    let report = if ok {
        BoundReport::new(ctx, lhs, eps)
    } else {
        BoundReport::not_applicable(ctx, lhs, eps)
    };
    Ok(Theorem1Report {
        report,
        rho,
        rho_tilde,
        t_error,
        view_terms,
        d_norms,
    })
}

/// The three layers of the stability argument for the leading direction.
#[derive(Clone, Debug)]
pub struct StabilityReport {
    /// Unit singular vectors, coefficients, out-of-sample projections.
    pub layers: [BoundReport; 3],
    /// Gap `σ1(T) − σ2(T)`.
    pub gap: f64,
    pub t_error: f64,
    /// `ε = max(‖T − T̃‖, 2 · view-1 term)`.
    pub eps: f64,
}

impl StabilityReport {
    pub fn applicable(&self) -> bool {
        self.layers.iter().all(|r| r.applicable)
    }

    pub fn passed(&self) -> bool {
        self.layers.iter().all(BoundReport::passed)
    }
}

/// Stability of the leading canonical direction.
///
/// `exact` must carry training data for view 1. `approx` is the Nyström model,
/// `t_tilde` and `approx_ridge1` its dense `T̃` and view-1 operator
/// `L̄1(L̄1 + Nλ1I)^{-1}`. `c` bounds the kernel.
pub fn stability_check(
    exact: &ExactSolution,
    approx: &KccaModel,
    t_tilde: MatRef<'_, f64>,
    approx_ridge1: MatRef<'_, f64>,
    test_points: MatRef<'_, f64>,
    c: f64,
) -> Result<StabilityReport> {
    let n = exact.t.nrows();
    let lambda1 = exact.model.lambda1;
    let gap = exact.gap(1);
    let t_error = spectral_norm((&exact.t - t_tilde).as_ref())?;
    let view1 = sym_spectral_norm((&exact.ridge_ops[0] - approx_ridge1).as_ref())?;
    let eps = t_error.max(2.0 * view1);
    let factor = 0.5 + 4.0 * 2f64.sqrt() / gap;

    let ap = exact.model.alpha_prime.col(0);
    let bp = approx.alpha_prime.col(0);
    let sign = if ap.transpose() * bp < 0.0 { -1.0 } else { 1.0 };
    let l1 = (0..n).map(|i| (ap[i] - sign * bp[i]).powi(2)).sum::<f64>().sqrt();

    let a = exact.model.coefficients(View::X)?.col(0);
    let b = approx.coefficients(View::X)?.col(0);
    let l2 = (0..n).map(|i| (a[i] - sign * b[i]).powi(2)).sum::<f64>().sqrt() / (n as f64).sqrt();

    let mut l3 = 0.0_f64;
    let mut row = vec![0.0; test_points.ncols()];
    for i in 0..test_points.nrows() {
        for (j, r) in row.iter_mut().enumerate() {
            *r = test_points[(i, j)];
        }
        let f = exact.model.project(View::X, &row)?[0];
        let g = approx.project(View::X, &row)?[0];
        l3 = l3.max((f - sign * g).abs());
    }

    let rhs = [
        4.0 * 2f64.sqrt() / gap * t_error,
        factor * eps / (n as f64 * lambda1),
        factor * c * eps / lambda1,
    ];
    let names = ["stability_I", "stability_II", "stability_III"];
    let applicable = gap > 0.0 && t_error <= gap / 2.0;
    let lhs = [l1, l2, l3];
    let layers = std::array::from_fn(|j| {
        let ctx = format!("{} r={gap} eps={eps}", names[j]);
        if applicable {
            BoundReport::new(ctx, lhs[j], rhs[j])
        } else {
            BoundReport::not_applicable(ctx, lhs[j], rhs[j])
        }
    });
    Ok(StabilityReport {
        layers,
        gap,
        t_error,
        eps,
    })
}
