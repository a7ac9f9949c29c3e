use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use nkcca::baselines::Rcca;
use nkcca::datasets::{load_paired_csv, synthetic_circles, Split};
use nkcca::diagnostics::{
    dense_t_tilde, lemma1_tail_check, lemma2_check, psd_ordering_check, stability_check, theorem1_check, BoundReport,
    DENSE_LIMIT,
};
use nkcca::kcca::{
    exact_solution, nkcca_fit, nkcca_fit_restart, total_correlation, ExactSolution, KccaModel, NkccaPath, View,
};
use nkcca::kernels::{ColumnOracle, GramMatrix, KernelData, KernelSpec};
use nkcca::leverage::{approx_leverage, exact_leverage, make_distribution, LeverageScores, SamplingDistribution};
use nkcca::linalg::{lanczos_norm, max_principal_angle};
use nkcca::sampling::{sample_labeled, SamplingPlan};
use nkcca::Mat;
use rayon::prelude::*;

use crate::config::{DatasetSpec, ExperimentConfig, Strategy};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Train, tune and test rows of both views.
#[derive(Clone, Debug)]
pub struct Data {
    pub train: [Mat<f64>; 2],
    pub tune: [Mat<f64>; 2],
    pub test: [Mat<f64>; 2],
}

impl Data {
    pub fn n(&self) -> usize {
        self.train[0].nrows()
    }
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Data> {
    match &cfg.dataset {
        DatasetSpec::Synthetic {
            n,
            n_tune,
            n_test,
            seed,
        } => {
            let d = synthetic_circles(n + n_tune + n_test, *seed)?;
            let rows = |a: usize, b: usize| -> [Mat<f64>; 2] {
                [d.x.subrows(a, b - a).to_owned(), d.y.subrows(a, b - a).to_owned()]
            };
            Ok(Data {
                train: rows(0, *n),
                tune: rows(*n, n + n_tune),
                test: rows(n + n_tune, n + n_tune + n_test),
            })
        }
        DatasetSpec::Csv { x, y, split, seed } => {
            let d = load_paired_csv(x, y, split, *seed)?;
            let part = |s: Split| {
                let (a, b) = d.part(s);
                [a, b]
            };
            Ok(Data {
                train: part(Split::Train),
                tune: part(Split::Tune),
                test: part(Split::Test),
            })
        }
    }
}

/// Kernel widths and regularization of both views.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyper {
    pub sigma: [f64; 2],
    pub lambda: [f64; 2],
}

impl Hyper {
    pub fn views(&self, data: &Data) -> Result<[KernelData; 2]> {
        Ok([
            KernelData::new(KernelSpec::rbf(self.sigma[0])?, data.train[0].as_ref()),
            KernelData::new(KernelSpec::rbf(self.sigma[1])?, data.train[1].as_ref()),
        ])
    }
}

/// Tune-set score of one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionRow {
    pub hyper: Hyper,
    pub tune_correlation: f64,
}

/// Total correlation of the first `l` projections on paired points.
pub fn score(model: &KccaModel, x: &Mat<f64>, y: &Mat<f64>) -> Result<f64> {
    let fx = model.project_rows(View::X, x.as_ref())?;
    let gy = model.project_rows(View::Y, y.as_ref())?;
    Ok(total_correlation(fx.as_ref(), gy.as_ref())?)
}

/// Grid search over kernel widths and regularization, scoring a uniform
/// Nyström fit at the last checkpoint by its tune-set total correlation.
pub fn select_hyper(cfg: &ExperimentConfig, data: &Data) -> Result<(Hyper, Vec<SelectionRow>)> {
    let first = Hyper {
        sigma: [cfg.sigma[0][0], cfg.sigma[1][0]],
        lambda: [cfg.lambda[0][0], cfg.lambda[1][0]],
    };
    if cfg.is_fixed() {
        return Ok((first, Vec::new()));
    }
    if data.tune[0].nrows() < 2 {
        return Err(CliError::config(
            "grid search needs a tune split with at least two rows",
        ));
    }
    let mut grid = Vec::new();
    for &sx in &cfg.sigma[0] {
        for &sy in &cfg.sigma[1] {
            for &lx in &cfg.lambda[0] {
                for &ly in &cfg.lambda[1] {
                    grid.push(Hyper {
                        sigma: [sx, sy],
                        lambda: [lx, ly],
                    });
                }
            }
        }
    }
    let n = data.n();
    let m = cfg.max_checkpoint().min(n);
    let rows: Vec<SelectionRow> = grid
        .par_iter()
        .map(|h| {
            let views = h.views(data)?;
            let plans = make_plans(
                Strategy::Uniform,
                [&views[0], &views[1]],
                *h,
                1.0,
                m,
                cfg.seeds[0],
                cfg,
                None,
            )?;
            let e = nkcca_fit([&views[0], &views[1]], [&plans[0], &plans[1]], h.lambda, cfg.l, &[m])?;
            let model = e
                .into_iter()
                .next()
                .expect("one checkpoint")
                .model
                .with_training(views[0].clone(), views[1].clone());
            Ok(SelectionRow {
                hyper: *h,
                tune_correlation: score(&model, &data.tune[0], &data.tune[1])?,
            })
        })
        .collect::<Result<_>>()?;
    let best = rows
        .iter()
        .fold(None::<&SelectionRow>, |b, r| match b {
            Some(b) if b.tune_correlation >= r.tune_correlation => Some(b),
            _ => Some(r),
        })
        .expect("nonempty grid");
    Ok((best.hyper, rows))
}

/// Exact leverage scores of both views, keyed by γ multiplier index.
pub type ExactScores = Vec<[LeverageScores; 2]>;

fn exact_scores(cfg: &ExperimentConfig, grams: [&GramMatrix; 2], h: Hyper) -> Result<ExactScores> {
    cfg.gamma_mult
        .iter()
        .map(|&g| {
            Ok([
                exact_leverage(grams[0], g * h.lambda[0])?,
                exact_leverage(grams[1], g * h.lambda[1])?,
            ])
        })
        .collect()
}

/// Sampling plans of length `m` for both views. View `v` draws from the
/// stream seeded `2 · seed + v + 1`.
#[allow(clippy::too_many_arguments)]
pub fn make_plans(
    strategy: Strategy,
    views: [&dyn ColumnOracle; 2],
    h: Hyper,
    gamma_mult: f64,
    m: usize,
    seed: u64,
    cfg: &ExperimentConfig,
    exact: Option<&[LeverageScores; 2]>,
) -> Result<[SamplingPlan; 2]> {
    let n = views[0].n();
    let stream = |v: usize| seed.wrapping_mul(2).wrapping_add(v as u64 + 1);
    let mk = |v: usize| -> Result<SamplingPlan> {
        let dist = match strategy {
            Strategy::Full => {
                if m > n {
                    return Err(CliError::config(format!("strategy full needs checkpoints <= N = {n}")));
                }
                return Ok(SamplingPlan::unit(n, (0..m).collect())?);
            }
            Strategy::Uniform => SamplingDistribution::uniform(n),
            Strategy::Ridge => {
                let sketch = cfg.sketch_size.unwrap_or(cfg.max_checkpoint()).min(n);
                let scores = approx_leverage(views[v], gamma_mult * h.lambda[v], sketch, stream(v) ^ 0x5ce7)?;
                make_distribution(&scores, cfg.mix_uniform)?
            }
            Strategy::Exact => {
                let scores = &exact.ok_or_else(|| CliError::config("exact strategy needs precomputed scores"))?[v];
                make_distribution(scores, cfg.mix_uniform)?
            }
        };
        Ok(sample_labeled(Arc::new(dist), m, stream(v), &strategy.to_string())?)
    };
    Ok([mk(0)?, mk(1)?])
}

fn strategy_grid(cfg: &ExperimentConfig) -> Vec<(Strategy, Option<usize>)> {
    let mut out = Vec::new();
    for &s in &cfg.strategies {
        match s {
            Strategy::Full | Strategy::Uniform => out.push((s, None)),
            Strategy::Ridge | Strategy::Exact => out.extend((0..cfg.gamma_mult.len()).map(|g| (s, Some(g)))),
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    /// `None` on seed-averaged rows.
    pub seed: Option<u64>,
    pub strategy: Strategy,
    pub gamma_mult: Option<f64>,
    pub m: usize,
    pub rank1: f64,
    pub rank2: f64,
    pub rho_err: f64,
    pub t_err: f64,
    pub alpha_err: f64,
    /// `(1/2 + 4√2/r) ‖T − T̃‖ / (Nλ1)`.
    pub bound: f64,
}

#[derive(Clone, Debug)]
pub struct ErrorCurve {
    pub hyper: Hyper,
    pub rho: f64,
    pub gap: f64,
    pub rows: Vec<ErrorRow>,
    pub averaged: Vec<ErrorRow>,
}

/// `‖T − T̃‖` with `T` dense and `T̃` applied through the path.
pub fn t_error(exact: &ExactSolution, path: &NkccaPath<'_>) -> f64 {
    let n = exact.t.nrows();
    let t = &exact.t;
    lanczos_norm(
        n,
        n,
        |v| {
            let tt = path.t_tilde_apply(v.as_mat()).expect("matching dimensions");
            t * v - tt.col(0)
        },
        |u| {
            let tt = path.t_tilde_apply_t(u.as_mat()).expect("matching dimensions");
            t.transpose() * u - tt.col(0)
        },
    )
}

/// `‖α − α̃‖ / √N` for the leading direction, signs aligned on `α′`.
pub fn alpha_error(exact: &KccaModel, approx: &KccaModel) -> Result<f64> {
    let n = exact.n();
    let (ap, bp) = (exact.alpha_prime.col(0), approx.alpha_prime.col(0));
    let sign = if ap.transpose() * bp < 0.0 { -1.0 } else { 1.0 };
    let a = exact.coefficients(View::X)?.col(0);
    let b = approx.coefficients(View::X)?.col(0);
    Ok((0..n).map(|i| (a[i] - sign * b[i]).powi(2)).sum::<f64>().sqrt() / (n as f64).sqrt())
}

/// Seed-by-seed approximation errors against the exact solution along each
/// strategy's rank path, plus seed averages.
pub fn run_error_curve(cfg: &ExperimentConfig) -> Result<ErrorCurve> {
    let data = load_data(cfg)?;
    let n = data.n();
    if n > EXACT_LIMIT {
        return Err(CliError::config(format!(
            "error-curve needs a dense exact reference; N = {n} is too large"
        )));
    }
    let (h, _) = select_hyper(cfg, &data)?;
    let views = h.views(&data)?;
    let grams = [views[0].gram(), views[1].gram()];
    let exact = exact_solution(&grams[0], &grams[1], h.lambda[0], h.lambda[1], 1)?;
    let exact_model = exact.model.clone();
    let gap = exact.gap(1);
    let factor = 0.5 + 4.0 * 2f64.sqrt() / gap;
    let lev = if cfg.strategies.contains(&Strategy::Exact) {
        exact_scores(cfg, [&grams[0], &grams[1]], h)?
    } else {
        Vec::new()
    };
    let m_max = cfg.max_checkpoint();
    let combos = strategy_grid(cfg);
    let per_seed: Vec<Vec<ErrorRow>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut rows = Vec::new();
            for &(strategy, g) in &combos {
                let gm = g.map(|g| cfg.gamma_mult[g]);
                let plans = make_plans(
                    strategy,
                    [&grams[0], &grams[1]],
                    h,
                    gm.unwrap_or(1.0),
                    m_max,
                    seed,
                    cfg,
                    g.and_then(|g| lev.get(g)),
                )?;
                let mut path = NkccaPath::new([&grams[0], &grams[1]], [&plans[0], &plans[1]], h.lambda, 1)?;
                for &m in &cfg.checkpoints {
                    path.advance_to(m, m)?;
                    let e = path.solve()?;
                    let t_err = t_error(&exact, &path);
                    rows.push(ErrorRow {
                        seed: Some(seed),
                        strategy,
                        gamma_mult: gm,
                        m,
                        rank1: e.rank1 as f64,
                        rank2: e.rank2 as f64,
                        rho_err: (exact_model.rho[0] - e.rho_tilde[0]).abs(),
                        t_err,
                        alpha_err: alpha_error(&exact_model, &e.model)?,
                        bound: factor * t_err / (n as f64 * h.lambda[0]),
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ErrorRow> = per_seed.into_iter().flatten().collect();
    let averaged = average_errors(&rows);
    Ok(ErrorCurve {
        hyper: h,
        rho: exact_model.rho[0],
        gap,
        rows,
        averaged,
    })
}

fn average_errors(rows: &[ErrorRow]) -> Vec<ErrorRow> {
    let mut groups: BTreeMap<(Strategy, u64, usize), Vec<&ErrorRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.strategy, r.gamma_mult.map_or(0, f64::to_bits), r.m);
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let k = g.len() as f64;
            let mean = |f: fn(&ErrorRow) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / k;
            ErrorRow {
                seed: None,
                strategy: g[0].strategy,
                gamma_mult: g[0].gamma_mult,
                m: g[0].m,
                rank1: mean(|r| r.rank1),
                rank2: mean(|r| r.rank2),
                rho_err: mean(|r| r.rho_err),
                t_err: mean(|r| r.t_err),
                alpha_err: mean(|r| r.alpha_err),
                bound: mean(|r| r.bound),
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn seed_field(s: Option<u64>) -> String {
    s.map_or_else(|| "mean".to_string(), |s| s.to_string())
}

pub fn write_error_curve<W: Write>(out: W, curve: &ErrorCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "seed",
        "strategy",
        "gamma_mult",
        "m",
        "rank1",
        "rank2",
        "rho_err",
        "t_err",
        "alpha_err",
        "bound",
    ])?;
    for r in curve.rows.iter().chain(&curve.averaged) {
        w.write_record([
            seed_field(r.seed),
            r.strategy.to_string(),
            opt(r.gamma_mult),
            r.m.to_string(),
            r.rank1.to_string(),
            r.rank2.to_string(),
            r.rho_err.to_string(),
            r.t_err.to_string(),
            r.alpha_err.to_string(),
            r.bound.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedupRow {
    pub m: usize,
    /// Seconds from the start of the incremental path to this checkpoint.
    pub incremental: f64,
    /// Seconds of the fresh fit at this checkpoint alone.
    pub restart: f64,
    /// Sum of fresh-fit times up to this checkpoint.
    pub restart_total: f64,
    pub speedup: f64,
    pub rho_diff: f64,
    pub angle: f64,
}

#[derive(Clone, Debug)]
pub struct SpeedupReport {
    pub rows: Vec<SpeedupRow>,
    /// Least-squares slope of the speedup over the last half of checkpoints,
    /// per checkpoint.
    pub late_slope: f64,
}

impl SpeedupReport {
    pub fn final_speedup(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.speedup)
    }

    pub fn trend_nondecreasing(&self) -> bool {
        self.late_slope >= 0.0
    }

    /// Largest incremental-vs-restart discrepancy: `(|Δρ̃|, angle)`.
    pub fn max_discrepancy(&self) -> (f64, f64) {
        self.rows
            .iter()
            .fold((0.0_f64, 0.0_f64), |(a, b), r| (a.max(r.rho_diff), b.max(r.angle)))
    }
}

fn slope(ys: &[f64]) -> f64 {
    let k = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mx = (k - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / k;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Incremental path timing against a fresh fit at every checkpoint, using
/// the first seed and strategy.
pub fn run_speedup(cfg: &ExperimentConfig) -> Result<SpeedupReport> {
    let data = load_data(cfg)?;
    let (h, _) = select_hyper(cfg, &data)?;
    let views = h.views(&data)?;
    let strategy = cfg.strategies[0];
    let lev = if strategy == Strategy::Exact {
        exact_scores(cfg, [&views[0].gram(), &views[1].gram()], h)?
    } else {
        Vec::new()
    };
    let seed = cfg.seeds[0];
    let oracles: [&dyn ColumnOracle; 2] = [&views[0], &views[1]];
    let plans = make_plans(
        strategy,
        oracles,
        h,
        cfg.gamma_mult[0],
        cfg.max_checkpoint(),
        seed,
        cfg,
        lev.first(),
    )?;
    let plans = [&plans[0], &plans[1]];
    let inc = nkcca_fit(oracles, plans, h.lambda, cfg.l, &cfg.checkpoints)?;
    let rst = nkcca_fit_restart(oracles, plans, h.lambda, cfg.l, &cfg.checkpoints)?;
    let mut rows = Vec::with_capacity(inc.len());
    let mut total = 0.0;
    for (a, b) in inc.iter().zip(&rst) {
        let restart = b.wall_time_restart.expect("restart timing");
        let incremental = a.wall_time_incremental.expect("incremental timing");
        total += restart;
        let rho_diff = a
            .rho_tilde
            .iter()
            .zip(&b.rho_tilde)
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        let angle = max_principal_angle(a.model.alpha_prime.as_ref(), b.model.alpha_prime.as_ref())?.max(
            max_principal_angle(a.model.beta_prime.as_ref(), b.model.beta_prime.as_ref())?,
        );
        rows.push(SpeedupRow {
            m: a.m1,
            incremental,
            restart,
            restart_total: total,
            speedup: total / incremental,
            rho_diff,
            angle,
        });
    }
    let speedups: Vec<f64> = rows.iter().map(|r| r.speedup).collect();
    let late_slope = slope(&speedups[speedups.len() / 2..]);
    Ok(SpeedupReport { rows, late_slope })
}

pub fn write_speedup<W: Write>(out: W, rep: &SpeedupReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "m",
        "incremental_s",
        "restart_s",
        "restart_total_s",
        "speedup",
        "rho_diff",
        "max_angle",
    ])?;
    for r in &rep.rows {
        w.write_record([
            r.m.to_string(),
            r.incremental.to_string(),
            r.restart.to_string(),
            r.restart_total.to_string(),
            r.speedup.to_string(),
            r.rho_diff.to_string(),
            r.angle.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub seed: Option<u64>,
    pub m: usize,
    pub rcca: f64,
    pub nkcca_uniform: f64,
    pub nkcca_ridge: f64,
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub hyper: Hyper,
    pub rows: Vec<ComparisonRow>,
    pub averaged: Vec<ComparisonRow>,
}

/// RCCA with `features` random features, its λ chosen on the tune split.
pub fn fit_rcca(cfg: &ExperimentConfig, data: &Data, h: Hyper, features: usize, seed: u64) -> Result<Rcca> {
    let fit = |lam: f64| {
        Rcca::fit(
            data.train[0].as_ref(),
            data.train[1].as_ref(),
            h.sigma,
            features,
            [lam, lam],
            cfg.l,
            seed,
        )
    };
    if cfg.rcca_lambda.len() == 1 || data.tune[0].nrows() < 2 {
        return Ok(fit(cfg.rcca_lambda[0])?);
    }
    let mut best: Option<(f64, Rcca)> = None;
    for &lam in &cfg.rcca_lambda {
        let model = fit(lam)?;
        let s = model.total_correlation(data.tune[0].as_ref(), data.tune[1].as_ref())?;
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, model));
        }
    }
    Ok(best.expect("nonempty grid").1)
}

/// Test-set total correlation of RCCA and both Nyström strategies at every
/// checkpoint, with RCCA using as many random features as landmarks drawn.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    let data = load_data(cfg)?;
    if data.test[0].nrows() < 2 {
        return Err(CliError::config("compare needs a test split with at least two rows"));
    }
    let (h, _) = select_hyper(cfg, &data)?;
    let views = h.views(&data)?;
    let oracles: [&dyn ColumnOracle; 2] = [&views[0], &views[1]];
    let m_max = cfg.max_checkpoint();
    let per_seed: Vec<Vec<ComparisonRow>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut scores = Vec::new();
            for strategy in [Strategy::Uniform, Strategy::Ridge] {
                let plans = make_plans(strategy, oracles, h, cfg.gamma_mult[0], m_max, seed, cfg, None)?;
                let mut path = NkccaPath::new(oracles, [&plans[0], &plans[1]], h.lambda, cfg.l)?;
                let mut s = Vec::new();
                for &m in &cfg.checkpoints {
                    path.advance_to(m, m)?;
                    let model = path.solve()?.model.with_training(views[0].clone(), views[1].clone());
                    s.push(score(&model, &data.test[0], &data.test[1])?);
                }
                scores.push(s);
            }
            cfg.checkpoints
                .iter()
                .enumerate()
                .map(|(i, &m)| {
                    let rcca = fit_rcca(cfg, &data, h, m, seed)?;
                    Ok(ComparisonRow {
                        seed: Some(seed),
                        m,
                        rcca: rcca.total_correlation(data.test[0].as_ref(), data.test[1].as_ref())?,
                        nkcca_uniform: scores[0][i],
                        nkcca_ridge: scores[1][i],
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ComparisonRow> = per_seed.into_iter().flatten().collect();
    let k = cfg.seeds.len() as f64;
    let averaged = cfg
        .checkpoints
        .iter()
        .map(|&m| {
            let g: Vec<&ComparisonRow> = rows.iter().filter(|r| r.m == m).collect();
            ComparisonRow {
                seed: None,
                m,
                rcca: g.iter().map(|r| r.rcca).sum::<f64>() / k,
                nkcca_uniform: g.iter().map(|r| r.nkcca_uniform).sum::<f64>() / k,
                nkcca_ridge: g.iter().map(|r| r.nkcca_ridge).sum::<f64>() / k,
            }
        })
        .collect();
    Ok(ComparisonReport {
        hyper: h,
        rows,
        averaged,
    })
}

pub fn write_comparison<W: Write>(out: W, rep: &ComparisonReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "m", "rcca", "nkcca_uniform", "nkcca_ridge"])?;
    for r in rep.rows.iter().chain(&rep.averaged) {
        w.write_record([
            seed_field(r.seed),
            r.m.to_string(),
            r.rcca.to_string(),
            r.nkcca_uniform.to_string(),
            r.nkcca_ridge.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Largest training set for which a dense exact reference is computed.
pub const EXACT_LIMIT: usize = 5000;

/// Fraction of `‖D‖` allowed by the gated checks.
pub const BOUND_T: f64 = 0.5;

/// Every bound check on one seeded instance per (seed, checkpoint,
/// strategy). Dense, so `N` is limited.
pub fn check_bounds(cfg: &ExperimentConfig) -> Result<Vec<BoundReport>> {
    let data = load_data(cfg)?;
    let n = data.n();
    if n > DENSE_LIMIT {
        return Err(CliError::config(format!(
            "check-bounds is dense; N must be at most {DENSE_LIMIT}"
        )));
    }
    let (h, _) = select_hyper(cfg, &data)?;
    let views = h.views(&data)?;
    let grams = [views[0].gram(), views[1].gram()];
    let exact = exact_solution(&grams[0], &grams[1], h.lambda[0], h.lambda[1], 1)?;
    let exact = ExactSolution {
        model: exact.model.clone().with_training(views[0].clone(), views[1].clone()),
        ..exact
    };
    let lev = if cfg.strategies.contains(&Strategy::Exact) {
        exact_scores(cfg, [&grams[0], &grams[1]], h)?
    } else {
        Vec::new()
    };
    let test = if data.test[0].nrows() > 0 {
        data.test[0].clone()
    } else {
        data.train[0].clone()
    };
    let combos = strategy_grid(cfg);
    let per_seed: Vec<Vec<BoundReport>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut out = Vec::new();
            for &(strategy, g) in &combos {
                let gm = g.map_or(1.0, |g| cfg.gamma_mult[g]);
                let gammas = [gm * h.lambda[0], gm * h.lambda[1]];
                let plans = make_plans(
                    strategy,
                    [&grams[0], &grams[1]],
                    h,
                    gm,
                    cfg.max_checkpoint(),
                    seed,
                    cfg,
                    g.and_then(|g| lev.get(g)),
                )?;
                for &m in &cfg.checkpoints {
                    let p = [plans[0].prefix(m), plans[1].prefix(m)];
                    let tag = |r: BoundReport| BoundReport {
                        context: format!("{} strategy={strategy} seed={seed}", r.context),
                        ..r
                    };
                    out.push(tag(psd_ordering_check(&grams[0], &p[0], gammas[0])?));
                    out.push(tag(lemma1_tail_check(&grams[0], &p[0], gammas[0], BOUND_T)?));
                    out.push(tag(lemma2_check(&grams[0], &p[0], gammas[0], h.lambda[0], BOUND_T)?));
                    let th = theorem1_check([&grams[0], &grams[1]], [&p[0], &p[1]], h.lambda, gammas, [BOUND_T; 2])?;
                    out.push(tag(th.report.clone()));
                    out.push(tag(BoundReport::new(
                        format!("weyl_lower M={m}"),
                        (th.rho - th.rho_tilde).abs(),
                        th.t_error,
                    )));
                    out.push(tag(BoundReport::new(
                        format!("weyl_upper M={m}"),
                        th.t_error,
                        th.view_terms[0] + th.view_terms[1],
                    )));
                    let mut path = NkccaPath::new([&grams[0], &grams[1]], [&p[0], &p[1]], h.lambda, 1)?;
                    path.advance_to(m, m)?;
                    let approx = path.solve()?.model.with_training(views[0].clone(), views[1].clone());
                    let (tt, ops) = dense_t_tilde([&grams[0], &grams[1]], [&p[0], &p[1]], h.lambda)?;
                    let st = stability_check(&exact, &approx, tt.as_ref(), ops[0].as_ref(), test.as_ref(), 1.0)?;
                    out.extend(st.layers.into_iter().map(tag));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// Timed exact fit on the training split.
pub fn fit_exact(cfg: &ExperimentConfig) -> Result<(KccaModel, f64)> {
    let data = load_data(cfg)?;
    let (h, _) = select_hyper(cfg, &data)?;
    let views = h.views(&data)?;
    let t = Instant::now();
    let model = exact_solution(&views[0].gram(), &views[1].gram(), h.lambda[0], h.lambda[1], cfg.l)?.model;
    Ok((
        model.with_training(views[0].clone(), views[1].clone()),
        t.elapsed().as_secs_f64(),
    ))
}

/// Rank path of the first strategy and seed with the model at the last
/// checkpoint.
pub fn fit_nkcca(cfg: &ExperimentConfig) -> Result<(Vec<nkcca::kcca::RankPathEntry>, KccaModel)> {
    let data = load_data(cfg)?;
    let (h, _) = select_hyper(cfg, &data)?;
    let views = h.views(&data)?;
    let oracles: [&dyn ColumnOracle; 2] = [&views[0], &views[1]];
    let strategy = cfg.strategies[0];
    let lev = if strategy == Strategy::Exact {
        exact_scores(cfg, [&views[0].gram(), &views[1].gram()], h)?
    } else {
        Vec::new()
    };
    let plans = make_plans(
        strategy,
        oracles,
        h,
        cfg.gamma_mult[0],
        cfg.max_checkpoint(),
        cfg.seeds[0],
        cfg,
        lev.first(),
    )?;
    let entries = nkcca_fit(oracles, [&plans[0], &plans[1]], h.lambda, cfg.l, &cfg.checkpoints)?;
    let model = entries
        .last()
        .expect("checkpoints")
        .model
        .clone()
        .with_training(views[0].clone(), views[1].clone());
    Ok((entries, model))
}

pub fn write_path<W: Write>(out: W, entries: &[nkcca::kcca::RankPathEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "rank1", "rank2", "component", "rho_tilde", "elapsed_s"])?;
    for e in entries {
        for (l, r) in e.rho_tilde.iter().enumerate() {
            w.write_record([
                e.m1.to_string(),
                e.rank1.to_string(),
                e.rank2.to_string(),
                (l + 1).to_string(),
                r.to_string(),
                opt(e.wall_time_incremental),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
