//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::process::ExitCode;
use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use nkcca::datasets::synthetic_circles;
use nkcca::diagnostics::{
    dense_t_tilde, lemma1_tail_check, lemma2_check, psd_ordering_check, stability_check, theorem1_check,
};
use nkcca::kcca::{exact_solution, nkcca_fit, ExactSolution, NkccaPath};
use nkcca::kernels::{gram, GramMatrix, KernelData, KernelSpec};
use nkcca::leverage::{exact_leverage, SamplingDistribution};
use nkcca::linalg::spectral_norm;
use nkcca::sampling::{sample, SamplingPlan};
use nkcca_cli::{run_comparison, run_error_curve, run_speedup, ErrorCurve, ErrorRow, RawConfig, Strategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn config(pairs: &[&str]) -> nkcca_cli::ExperimentConfig {
    let mut raw = RawConfig::default();
    for p in pairs {
        raw.set_pair(p).expect("valid key");
    }
    raw.build().expect("valid config")
}

fn views(n: usize, sigma: [f64; 2], seed: u64) -> (KernelData, KernelData) {
    let d = synthetic_circles(n, seed).expect("synthetic data");
    (
        KernelData::new(KernelSpec::rbf(sigma[0]).unwrap(), d.x.as_ref()),
        KernelData::new(KernelSpec::rbf(sigma[1]).unwrap(), d.y.as_ref()),
    )
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> GramMatrix {
    let r = rng.random_range(1..=n);
    let b = Mat::from_fn(n, r, |_, _| rng.random::<f64>() - 0.5);
    GramMatrix::from_mat(&b * b.transpose()).unwrap()
}

fn random_kernel(rng: &mut ChaCha8Rng, n: usize) -> GramMatrix {
    if rng.random::<bool>() {
        random_psd(rng, n)
    } else {
        let d = synthetic_circles(n, rng.random()).unwrap();
        let sigma = 0.2 + 2.0 * rng.random::<f64>();
        let x = if rng.random::<bool>() { d.x } else { d.y };
        gram(&KernelSpec::rbf(sigma).unwrap(), x.as_ref())
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(lo + (hi - lo) * rng.random::<f64>())
}

fn random_plan(rng: &mut ChaCha8Rng, n: usize) -> SamplingPlan {
    let m = rng.random_range(1..=2 * n);
    let d = if rng.random::<bool>() {
        SamplingDistribution::uniform(n)
    } else {
        let w: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
        SamplingDistribution::from_weights(&w, 1.0).unwrap()
    };
    sample(&d, m, rng.random()).unwrap()
}

fn criterion1() -> Outcome {
    let mut worst = 0.0_f64;
    for (n, sigma) in [
        (100, [0.5, 0.5]),
        (150, [1.0, 0.7]),
        (200, [0.5, 0.5]),
        (200, [1.0, 1.0]),
    ] {
        let (x, y) = views(n, sigma, 1);
        let plan = SamplingPlan::full(n);
        let path = nkcca_fit([&x, &y], [&plan, &plan], [1e-3, 1e-3], 4, &[n]).unwrap();
        let exact = exact_solution(&x.gram(), &y.gram(), 1e-3, 1e-3, 4).unwrap();
        for l in 0..4 {
            worst = worst.max((path[0].rho_tilde[l] - exact.model.rho[l]).abs());
        }
    }
    outcome(worst <= 1e-8, format!("max |rho_l - rho~_l| over l <= 4 = {worst:.2e}"))
}

fn criterion2() -> Outcome {
    let mut rho = 0.0_f64;
    let mut angle = 0.0_f64;
    for strategy in ["uniform", "ridge"] {
        let cfg = config(&[
            "n=500",
            "sigma=0.5",
            "lambda=1e-3",
            "checkpoints=25:250:25",
            "L=3",
            &format!("strategy={strategy}"),
            "seeds=7",
        ]);
        let rep = run_speedup(&cfg).unwrap();
        let (r, a) = rep.max_discrepancy();
        rho = rho.max(r);
        angle = angle.max(a);
    }
    outcome(
        rho <= 1e-8 && angle <= 1e-6,
        format!("max |d rho~| = {rho:.2e}, max principal angle = {angle:.2e}"),
    )
}

fn criterion3() -> Outcome {
    let cfg = config(&[
        "n=3000",
        "sigma=0.5",
        "lambda=1e-3",
        "checkpoints=100:1000:100",
        "seeds=1",
    ]);
    let rep = run_speedup(&cfg).unwrap();
    let last = rep.rows.last().unwrap();
    let pass = last.incremental < last.restart_total && rep.final_speedup() > 1.0 && rep.trend_nondecreasing();
    outcome(
        pass,
        format!(
            "incremental {:.2} s vs restarts {:.2} s, final speedup {:.2}, late slope {:.3}",
            last.incremental,
            last.restart_total,
            rep.final_speedup(),
            rep.late_slope
        ),
    )
}

fn criterion4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut ordering_ok, mut gated, mut gated_ok, mut tail_gated, mut tail_ok) = (0, 0, 0, 0, 0);
    let total = 1000;
    for _ in 0..total {
        let n = rng.random_range(5..=60);
        let k = random_kernel(&mut rng, n);
        let plan = random_plan(&mut rng, n);
        let gamma = log_uniform(&mut rng, -4.0, -1.0);
        let lambda = log_uniform(&mut rng, -4.0, -1.0);
        let t = 0.05 + 0.9 * rng.random::<f64>();
        if psd_ordering_check(&k, &plan, gamma).unwrap().passed() {
            ordering_ok += 1;
        }
        let l2 = lemma2_check(&k, &plan, gamma, lambda, t).unwrap();
        if l2.applicable {
            gated += 1;
            gated_ok += usize::from(l2.holds);
        }
        let l1 = lemma1_tail_check(&k, &plan, gamma, t).unwrap();
        if l1.applicable {
            tail_gated += 1;
            tail_ok += usize::from(l1.holds);
        }
    }
    outcome(
        ordering_ok == total && gated_ok == gated && tail_ok == tail_gated && gated > 0,
        format!("ordering {ordering_ok}/{total}, ridge operator {gated_ok}/{gated} gated, tail {tail_ok}/{tail_gated} gated"),
    )
}

fn criterion5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ok = 0;
    let total = 200;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..total {
        let n = rng.random_range(5..=60);
        let k1 = random_kernel(&mut rng, n);
        let k2 = random_kernel(&mut rng, n);
        let p1 = random_plan(&mut rng, n);
        let p2 = random_plan(&mut rng, n);
        let lambdas = [log_uniform(&mut rng, -4.0, -1.0), log_uniform(&mut rng, -4.0, -1.0)];
        let r = theorem1_check([&k1, &k2], [&p1, &p2], lambdas, lambdas, [0.5, 0.5]).unwrap();
        let lower = (r.rho - r.rho_tilde).abs() - r.t_error;
        let upper = r.t_error - (r.view_terms[0] + r.view_terms[1]);
        worst = worst.max(lower).max(upper);
        if lower <= 1e-8 && upper <= 1e-8 {
            ok += 1;
        }
    }
    outcome(
        ok == total,
        format!("{ok}/{total} chains hold, largest excess {worst:.2e}"),
    )
}

fn criterion6() -> Outcome {
    let n = 200;
    let lambda = 1e-2;
    let d = synthetic_circles(n + 100, 6).unwrap();
    let x = KernelData::new(KernelSpec::rbf(0.5).unwrap(), d.x.subrows(0, n));
    let y = KernelData::new(KernelSpec::rbf(0.5).unwrap(), d.y.subrows(0, n));
    let test = d.x.subrows(n, 100).to_owned();
    let (kx, ky) = (x.gram(), y.gram());
    let exact = exact_solution(&kx, &ky, lambda, lambda, 1).unwrap();
    let exact = ExactSolution {
        model: exact.model.clone().with_training(x.clone(), y.clone()),
        ..exact
    };
    let gap = exact.gap(1);
    let dist = SamplingDistribution::uniform(n);
    let (mut passed, mut na, mut failed) = (0, 0, 0);
    for seed in 0..20u64 {
        let p1 = sample(&dist, 4 * n, 2 * seed + 1).unwrap();
        let p2 = sample(&dist, 4 * n, 2 * seed + 2).unwrap();
        let mut chosen = None;
        for m in (20..=4 * n).step_by(20) {
            let q = [p1.prefix(m), p2.prefix(m)];
            let (tt, ops) = dense_t_tilde([&kx, &ky], [&q[0], &q[1]], [lambda, lambda]).unwrap();
            if spectral_norm((&exact.t - &tt).as_ref()).unwrap() <= gap / 2.0 {
                chosen = Some((q, tt, ops));
                break;
            }
        }
        let Some((q, tt, ops)) = chosen else {
            na += 1;
            continue;
        };
        let mut path = NkccaPath::new([&x, &y], [&q[0], &q[1]], [lambda, lambda], 1).unwrap();
        path.advance_to(q[0].len(), q[1].len()).unwrap();
        let approx = path.solve().unwrap().model.with_training(x.clone(), y.clone());
        let rep = stability_check(&exact, &approx, tt.as_ref(), ops[0].as_ref(), test.as_ref(), 1.0).unwrap();
        if !rep.applicable() {
            na += 1;
        } else if rep.passed() {
            passed += 1;
        } else {
            failed += 1;
        }
    }
    outcome(
        failed == 0 && passed > 0,
        format!("gap r = {gap:.3}: {passed} seeds pass all three layers, {failed} fail, {na} not applicable"),
    )
}

/// Nonincreasing with at most one increase, itself at most 10%.
fn nonincreasing(values: &[f64]) -> bool {
    let ups: Vec<f64> = values
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| (w[1] - w[0]) / w[0])
        .collect();
    ups.len() <= 1 && ups.iter().all(|&u| u <= 0.10)
}

fn curve_rows(curve: &ErrorCurve, s: Strategy) -> Vec<&ErrorRow> {
    curve.averaged.iter().filter(|r| r.strategy == s).collect()
}

fn criterion7(curve: &ErrorCurve) -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for s in [Strategy::Uniform, Strategy::Ridge] {
        let rows = curve_rows(curve, s);
        let rho: Vec<f64> = rows.iter().map(|r| r.rho_err).collect();
        let alpha: Vec<f64> = rows.iter().map(|r| r.alpha_err).collect();
        let below = rows.iter().all(|r| r.alpha_err <= r.bound);
        let ok = nonincreasing(&rho) && nonincreasing(&alpha) && below;
        pass &= ok;
        notes.push(format!(
            "{s}: rho err {:.2e} -> {:.2e}, alpha err {:.2e} -> {:.2e}, under bound {below}",
            rho[0],
            rho[rho.len() - 1],
            alpha[0],
            alpha[alpha.len() - 1]
        ));
    }
    outcome(pass, notes.join("; "))
}

fn criterion8(curve: &ErrorCurve) -> Outcome {
    let u = curve_rows(curve, Strategy::Uniform);
    let r = curve_rows(curve, Strategy::Ridge);
    let (worst, worst_m) = u
        .iter()
        .zip(&r)
        .map(|(u, r)| (r.rho_err / u.rho_err, u.m))
        .fold((0.0_f64, 0), |a, b| if b.0 > a.0 { b } else { a });
    let cfg = config(&[
        "n=3000",
        "n_tune=500",
        "n_test=1000",
        "sigma=0.5",
        "lambda=1e-3",
        "checkpoints=100:1000:100",
        "seeds=1:5:1",
        "L=2",
    ]);
    let cmp = run_comparison(&cfg).unwrap();
    let margin = cmp
        .averaged
        .iter()
        .map(|a| a.nkcca_uniform - a.rcca)
        .fold(f64::INFINITY, f64::min);
    outcome(
        worst <= 1.1 && margin >= 0.0,
        format!("max ridge/uniform error ratio {worst:.2} at rank {worst_m}; min NKCCA-uniform minus RCCA test correlation {margin:.4}"),
    )
}

fn dense_scores(k: &GramMatrix, gamma: f64) -> Vec<f64> {
    let n = k.n();
    let a = Mat::from_fn(n, n, |i, j| {
        k.as_ref()[(i, j)] + if i == j { n as f64 * gamma } else { 0.0 }
    });
    let x = a.llt(Side::Lower).unwrap().solve(k.as_ref());
    (0..n).map(|i| x[(i, i)]).collect()
}

fn criterion9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let n = rng.random_range(2..=50);
        let k = random_kernel(&mut rng, n);
        let gamma = log_uniform(&mut rng, -4.0, 0.0);
        let got = exact_leverage(&k, gamma).unwrap();
        let want = dense_scores(&k, gamma);
        worst = got
            .scores
            .iter()
            .zip(&want)
            .fold(worst, |m, (a, b)| m.max((a - b).abs()));
    }
    let (mut mono, mut deff) = (0, 0);
    for _ in 0..500 {
        let n = rng.random_range(2..=40);
        let k = random_kernel(&mut rng, n);
        let g1 = log_uniform(&mut rng, -4.0, 0.0);
        let g2 = g1 * (1.0 + 10.0 * rng.random::<f64>());
        let (a, b) = (exact_leverage(&k, g1).unwrap(), exact_leverage(&k, g2).unwrap());
        if a.scores.iter().zip(&b.scores).all(|(x, y)| *y <= x + 1e-12) && b.d_eff <= a.d_eff + 1e-12 {
            mono += 1;
        }
        let bound = k.trace() / (n as f64 * g1);
        if a.d_eff <= bound * (1.0 + 1e-12) {
            deff += 1;
        }
    }
    outcome(
        worst <= 1e-8 && mono == 500 && deff == 500,
        format!("max oracle gap {worst:.2e}; monotone in gamma {mono}/500; d_eff bound {deff}/500"),
    )
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        all &= o.pass;
        println!(
            "criterion {id} [{}] {name}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    };
    report(1, "exactness at full rank", &mut criterion1);
    report(2, "incremental equals restart", &mut criterion2);
    report(3, "incremental speedup", &mut criterion3);
    report(4, "ordering and ridge-operator lemmas", &mut criterion4);
    report(5, "Weyl chain", &mut criterion5);
    report(6, "stability layers", &mut criterion6);
    let curve_cfg = config(&[
        "n=3000",
        "sigma=0.5",
        "lambda=1e-3",
        "strategy=uniform,ridge",
        "checkpoints=100:1000:100",
        "seeds=1:20:1",
    ]);
    let t = Instant::now();
    let curve = run_error_curve(&curve_cfg).unwrap();
    println!(
        "shared error curve over 20 seeds computed in {:.1} s",
        t.elapsed().as_secs_f64()
    );
    report(7, "error decreases with rank", &mut || criterion7(&curve));
    report(8, "sampling strategies and RCCA", &mut || criterion8(&curve));
    report(9, "leverage scores", &mut criterion9);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
