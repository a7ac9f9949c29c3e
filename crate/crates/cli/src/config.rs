//! Flat `key=value` experiment configuration.
//!
//! One entry per line; `#` starts a comment. Lists are written `a,b,c`, and
//! integer lists also accept inclusive ranges `start:stop:step`, which can be
//! mixed with plain items (`10,100:300:100`). Later assignments override
//! earlier ones, which is how command-line flags take precedence over a file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nkcca::datasets::SplitSpec;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Every training column in order, unit weights.
    Full,
    Uniform,
    /// Leverage scores estimated from a uniform sketch.
    Ridge,
    /// Exact leverage scores.
    Exact,
}

impl FromStr for Strategy {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim() {
            "full" => Ok(Strategy::Full),
            "uniform" => Ok(Strategy::Uniform),
            "ridge" => Ok(Strategy::Ridge),
            "exact" => Ok(Strategy::Exact),
            other => Err(CliError::config(format!("unknown strategy `{other}`"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Full => "full",
            Strategy::Uniform => "uniform",
            Strategy::Ridge => "ridge",
            Strategy::Exact => "exact",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    /// Ring data with the given train, tune and test sizes.
    Synthetic {
        n: usize,
        n_tune: usize,
        n_test: usize,
        seed: u64,
    },
    Csv {
        x: PathBuf,
        y: PathBuf,
        split: SplitSpec,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub sigma: [Vec<f64>; 2],
    pub lambda: [Vec<f64>; 2],
    pub strategies: Vec<Strategy>,
    /// `γ = multiplier · λ` per view.
    pub gamma_mult: Vec<f64>,
    pub checkpoints: Vec<usize>,
    pub l: usize,
    pub seeds: Vec<u64>,
    /// Columns sampled for the `ridge` leverage estimate; `None` uses
    /// `min(N, last checkpoint)`.
    pub sketch_size: Option<usize>,
    pub mix_uniform: f64,
    /// Regularization grid for the RCCA baseline, selected on the tune split.
    pub rcca_lambda: Vec<f64>,
    pub output: Option<PathBuf>,
}

/// Parsed but uninterpreted key/value pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

const KEYS: &[&str] = &[
    "n",
    "n_tune",
    "n_test",
    "data_seed",
    "x_csv",
    "y_csv",
    "split",
    "sigma",
    "sigma_x",
    "sigma_y",
    "lambda",
    "lambda_x",
    "lambda_y",
    "strategy",
    "gamma_mult",
    "checkpoints",
    "L",
    "seeds",
    "sketch_size",
    "mix_uniform",
    "rcca_lambda",
    "output",
];

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut raw = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            raw.set_pair(line)
                .map_err(|e| CliError::config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(raw)
    }

    /// Applies one `key=value` assignment.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("expected key=value, got `{pair}`")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !KEYS.contains(&key) {
            return Err(CliError::config(format!("unknown key `{key}`")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn num<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| CliError::config(format!("{key}: {e}"))),
        }
    }

    fn floats(&self, key: &str, fallback: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        match self.get(key).or_else(|| self.get(fallback)) {
            None => Ok(default.to_vec()),
            Some(v) => parse_float_list(v).map_err(|e| CliError::config(format!("{key}: {e}"))),
        }
    }

    pub fn build(&self) -> Result<ExperimentConfig, CliError> {
        let seed = self.num("data_seed", 1u64)?;
        let dataset = match (self.get("x_csv"), self.get("y_csv")) {
            (Some(x), Some(y)) => DatasetSpec::Csv {
                x: x.into(),
                y: y.into(),
                split: self
                    .get("split")
                    .unwrap_or("0.6:0.2:0.2")
                    .parse()
                    .map_err(|e| CliError::config(format!("split: {e}")))?,
                seed,
            },
            (None, None) => DatasetSpec::Synthetic {
                n: self.num("n", 1000)?,
                n_tune: self.num("n_tune", 0)?,
                n_test: self.num("n_test", 0)?,
                seed,
            },
            _ => return Err(CliError::config("x_csv and y_csv must be given together")),
        };
        let strategies = match self.get("strategy") {
            None => vec![Strategy::Uniform],
            Some(v) => v.split(',').map(str::parse).collect::<Result<_, _>>()?,
        };
        let checkpoints = match self.get("checkpoints") {
            None => vec![100],
            Some(v) => parse_int_list(v).map_err(|e| CliError::config(format!("checkpoints: {e}")))?,
        };
        let seeds = match self.get("seeds") {
            None => vec![1],
            Some(v) => parse_int_list(v)
                .map_err(|e| CliError::config(format!("seeds: {e}")))?
                .into_iter()
                .map(|s| s as u64)
                .collect(),
        };
        let sketch_size = match self.get("sketch_size") {
            None => None,
            Some(v) => Some(v.parse().map_err(|e| CliError::config(format!("sketch_size: {e}")))?),
        };
        let cfg = ExperimentConfig {
            dataset,
            sigma: [
                self.floats("sigma_x", "sigma", &[1.0])?,
                self.floats("sigma_y", "sigma", &[1.0])?,
            ],
            lambda: [
                self.floats("lambda_x", "lambda", &[1e-3])?,
                self.floats("lambda_y", "lambda", &[1e-3])?,
            ],
            strategies,
            gamma_mult: self.floats("gamma_mult", "gamma_mult", &[1.0])?,
            checkpoints,
            l: self.num("L", 1)?,
            seeds,
            sketch_size,
            mix_uniform: self.num("mix_uniform", 0.0)?,
            rcca_lambda: self.floats("rcca_lambda", "rcca_lambda", &[1e-4, 1e-3, 1e-2, 1e-1])?,
            output: self.get("output").map(PathBuf::from),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &str, v: &[f64]| -> Result<(), CliError> {
            if v.is_empty() {
                return Err(CliError::config(format!("{name}: empty grid")));
            }
            if let Some(bad) = v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                return Err(CliError::config(format!("{name}: {bad} is not positive")));
            }
            Ok(())
        };
        positive("sigma_x", &self.sigma[0])?;
        positive("sigma_y", &self.sigma[1])?;
        positive("lambda_x", &self.lambda[0])?;
        positive("lambda_y", &self.lambda[1])?;
        positive("gamma_mult", &self.gamma_mult)?;
        positive("rcca_lambda", &self.rcca_lambda)?;
        if self.strategies.is_empty() {
            return Err(CliError::config("strategy: empty list"));
        }
        if self.seeds.is_empty() {
            return Err(CliError::config("seeds: empty list"));
        }
        if self.checkpoints.is_empty() || self.checkpoints[0] == 0 || self.checkpoints.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(CliError::config("checkpoints must be positive and strictly increasing"));
        }
        if self.l == 0 {
            return Err(CliError::config("L must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.mix_uniform) {
            return Err(CliError::config("mix_uniform must lie in [0, 1]"));
        }
        if let DatasetSpec::Synthetic { n, .. } = self.dataset {
            if n == 0 {
                return Err(CliError::config("n must be positive"));
            }
        }
        Ok(())
    }

    pub fn max_checkpoint(&self) -> usize {
        *self.checkpoints.last().expect("validated")
    }

    /// True when every hyperparameter grid has a single value.
    pub fn is_fixed(&self) -> bool {
        self.sigma.iter().chain(&self.lambda).all(|g| g.len() == 1)
    }
}

pub fn parse_float_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{}`: {e}", p.trim())))
        .collect()
}

pub fn parse_int_list(s: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        let fields: Vec<&str> = part.split(':').collect();
        let int = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
        match fields.as_slice() {
            [v] => out.push(int(v)?),
            [a, b, c] => {
                let (start, stop, step) = (int(a)?, int(b)?, int(c)?);
                if step == 0 || stop < start {
                    return Err(format!("bad range `{part}`"));
                }
                out.extend((start..=stop).step_by(step));
            }
            _ => return Err(format!("bad list item `{part}`")),
        }
    }
    Ok(out)
}
