use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nkcca::datasets::write_csv;
use nkcca::diagnostics::write_reports_csv;
use nkcca_cli::*;

#[derive(Parser)]
#[command(name = "nkcca", version, about = "Nyström kernel CCA experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the train, tune and test splits of both views as CSV.
    GenData(Opts),
    /// Exact KCCA on the training split.
    Exact(Opts),
    /// Nyström rank path of the first strategy and seed.
    Nkcca(Opts),
    /// Random Fourier feature CCA with one feature count per checkpoint.
    Rcca(Opts),
    /// Approximation errors against the exact solution along rank paths.
    ErrorCurve(Opts),
    /// Incremental versus from-scratch timing.
    Speedup(Opts),
    /// Test-set total correlation of RCCA and both Nyström strategies.
    Compare(Opts),
    /// Dense checks of every approximation and stability bound.
    CheckBounds(Opts),
}

#[derive(Args, Clone, Default)]
struct Opts {
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra key=value assignment; repeatable, applied after all flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    n_tune: Option<String>,
    #[arg(long)]
    n_test: Option<String>,
    #[arg(long)]
    data_seed: Option<String>,
    #[arg(long)]
    x_csv: Option<String>,
    #[arg(long)]
    y_csv: Option<String>,
    /// train:tune:test as counts or fractions.
    #[arg(long)]
    split: Option<String>,
    /// Kernel width grid for both views.
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    sigma_x: Option<String>,
    #[arg(long)]
    sigma_y: Option<String>,
    /// Regularization grid for both views.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    lambda_x: Option<String>,
    #[arg(long)]
    lambda_y: Option<String>,
    /// Comma list of full, uniform, ridge, exact.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    gamma_mult: Option<String>,
    /// Landmark counts, e.g. 100:1000:100.
    #[arg(long)]
    checkpoints: Option<String>,
    /// Number of canonical components.
    #[arg(long = "components", short = 'L')]
    l: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    sketch_size: Option<String>,
    #[arg(long)]
    mix_uniform: Option<String>,
    #[arg(long)]
    rcca_lambda: Option<String>,
    /// Output directory; CSV goes to stdout when absent.
    #[arg(long)]
    output: Option<String>,
}

impl Opts {
    fn config(&self) -> Result<ExperimentConfig, CliError> {
        let mut raw = match &self.config {
            Some(p) => RawConfig::parse(
                &fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?,
            )?,
            None => RawConfig::default(),
        };
        let flags = [
            ("n", &self.n),
            ("n_tune", &self.n_tune),
            ("n_test", &self.n_test),
            ("data_seed", &self.data_seed),
            ("x_csv", &self.x_csv),
            ("y_csv", &self.y_csv),
            ("split", &self.split),
            ("sigma", &self.sigma),
            ("sigma_x", &self.sigma_x),
            ("sigma_y", &self.sigma_y),
            ("lambda", &self.lambda),
            ("lambda_x", &self.lambda_x),
            ("lambda_y", &self.lambda_y),
            ("strategy", &self.strategy),
            ("gamma_mult", &self.gamma_mult),
            ("checkpoints", &self.checkpoints),
            ("L", &self.l),
            ("seeds", &self.seeds),
            ("sketch_size", &self.sketch_size),
            ("mix_uniform", &self.mix_uniform),
            ("rcca_lambda", &self.rcca_lambda),
            ("output", &self.output),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                raw.set(k, v)?;
            }
        }
        for pair in &self.set {
            raw.set_pair(pair)?;
        }
        raw.build()
    }
}

/// Writes `name` into the output directory, or to stdout without one.
fn emit(
    cfg: &ExperimentConfig,
    name: &str,
    columns: &str,
    f: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
) -> Result<(), CliError> {
    match &cfg.output {
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)
        }
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut w = BufWriter::new(File::create(dir.join(name))?);
            f(&mut w)?;
            w.flush()?;
            append_readme(dir, name, columns)
        }
    }
}

fn append_readme(dir: &Path, name: &str, columns: &str) -> Result<(), CliError> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("README.md"))?;
    writeln!(f, "## {name}\n\n{columns}\n")?;
    Ok(())
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GenData(o) => {
            let cfg = o.config()?;
            let dir = cfg
                .output
                .clone()
                .ok_or_else(|| CliError::config("gen-data needs --output"))?;
            let data = load_data(&cfg)?;
            fs::create_dir_all(&dir)?;
            for (part, views) in [("train", &data.train), ("tune", &data.tune), ("test", &data.test)] {
                for (v, m) in ["x", "y"].iter().zip(views.iter()) {
                    write_csv(&dir.join(format!("{part}_{v}.csv")), m.as_ref())?;
                }
            }
            append_readme(
                &dir,
                "{train,tune,test}_{x,y}.csv",
                "One row per point, one column per input dimension, no header.",
            )
        }
        Command::Exact(o) => {
            let cfg = o.config()?;
            let (model, secs) = fit_exact(&cfg)?;
            eprintln!("exact fit: {secs:.3} s");
            if let Some(dir) = &cfg.output {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("exact_model.txt"), model.to_record())?;
            }
            emit(
                &cfg,
                "exact.csv",
                "`component`, `rho`: canonical correlations of the exact solution.",
                |w| {
                    writeln!(w, "component,rho")?;
                    for (l, r) in model.rho.iter().enumerate() {
                        writeln!(w, "{},{r}", l + 1)?;
                    }
                    Ok(())
                },
            )
        }
        Command::Nkcca(o) => {
            let cfg = o.config()?;
            let (entries, model) = fit_nkcca(&cfg)?;
            if let Some(dir) = &cfg.output {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("nkcca_model.txt"), model.to_record())?;
            }
            emit(
                &cfg,
                "nkcca_path.csv",
                "`m` draws per view, accepted landmarks `rank1`/`rank2`, `component`, approximate correlation `rho_tilde`, cumulative `elapsed_s`.",
                |w| write_path(w, &entries),
            )
        }
        Command::Rcca(o) => {
            let cfg = o.config()?;
            let data = load_data(&cfg)?;
            let (h, _) = select_hyper(&cfg, &data)?;
            let eval = if data.test[0].nrows() >= 2 {
                &data.test
            } else {
                &data.train
            };
            let mut rows = Vec::new();
            for &seed in &cfg.seeds {
                for &m in &cfg.checkpoints {
                    let model = fit_rcca(&cfg, &data, h, m, seed)?;
                    rows.push((seed, m, model.total_correlation(eval[0].as_ref(), eval[1].as_ref())?));
                }
            }
            emit(
                &cfg,
                "rcca.csv",
                "`seed`, random `features` per view, `total_correlation` on the test split (training split when there is no test split).",
                |w| {
                    writeln!(w, "seed,features,total_correlation")?;
                    for (s, m, c) in &rows {
                        writeln!(w, "{s},{m},{c}")?;
                    }
                    Ok(())
                },
            )
        }
        Command::ErrorCurve(o) => {
            let cfg = o.config()?;
            let curve = run_error_curve(&cfg)?;
            eprintln!("rho = {}, gap = {}", curve.rho, curve.gap);
            emit(
                &cfg,
                "error_curve.csv",
                "`seed` (or `mean`), `strategy`, `gamma_mult`, draws `m`, accepted `rank1`/`rank2`, `rho_err` = |rho - rho~|, `t_err` = ||T - T~||, `alpha_err` = ||alpha - alpha~||/sqrt(N), `bound` = (1/2 + 4 sqrt(2)/r) t_err/(N lambda1).",
                |w| write_error_curve(w, &curve),
            )
        }
        Command::Speedup(o) => {
            let cfg = o.config()?;
            let rep = run_speedup(&cfg)?;
            eprintln!(
                "final speedup {:.3}, late-checkpoint slope {:.4} ({})",
                rep.final_speedup(),
                rep.late_slope,
                if rep.trend_nondecreasing() {
                    "nondecreasing"
                } else {
                    "decreasing"
                }
            );
            emit(
                &cfg,
                "speedup.csv",
                "`m`, cumulative `incremental_s`, single fresh fit `restart_s`, cumulative `restart_total_s`, `speedup` = restart_total_s/incremental_s, largest `rho_diff` and principal angle `max_angle` between both fits.",
                |w| write_speedup(w, &rep),
            )
        }
        Command::Compare(o) => {
            let cfg = o.config()?;
            let rep = run_comparison(&cfg)?;
            emit(
                &cfg,
                "compare.csv",
                "`seed` (or `mean`), rank `m`, test-set total correlation of `rcca`, `nkcca_uniform` and `nkcca_ridge`.",
                |w| write_comparison(w, &rep),
            )
        }
        Command::CheckBounds(o) => {
            let cfg = o.config()?;
            let reports = check_bounds(&cfg)?;
            emit(
                &cfg,
                "bounds.csv",
                "`context`, measured `lhs`, bound `rhs`, `holds`, and `applicable` (false when the bound's preconditions fail).",
                |w| Ok(write_reports_csv(w, &reports)?),
            )?;
            let failed = reports.iter().filter(|r| r.applicable && !r.holds).count();
            let skipped = reports.iter().filter(|r| !r.applicable).count();
            eprintln!("{} checks, {failed} failed, {skipped} not applicable", reports.len());
            if failed > 0 {
                return Err(CliError::Numerical(format!("{failed} applicable bound checks failed")));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
