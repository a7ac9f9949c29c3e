//! Two-view datasets: the synthetic ring data and paired CSV files.

use std::f64::consts::PI;
use std::path::Path;

use faer::{Mat, MatRef};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

const NOISE_VAR_X: f64 = 0.02;
const NOISE_VAR_Y: f64 = 0.03;
const MAX_ATTEMPTS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Tune,
    Test,
}

/// Row-aligned views with a split tag per row.
#[derive(Clone, Debug)]
pub struct PairedDataset {
    pub x: Mat<f64>,
    pub y: Mat<f64>,
    pub split: Vec<Split>,
    pub seed: u64,
}

impl PairedDataset {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows tagged `which`, in dataset order.
    pub fn part(&self, which: Split) -> (Mat<f64>, Mat<f64>) {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| self.split[i] == which).collect();
        (take_rows(self.x.as_ref(), &rows), take_rows(self.y.as_ref(), &rows))
    }

    pub fn count(&self, which: Split) -> usize {
        self.split.iter().filter(|&&s| s == which).count()
    }
}

fn take_rows(m: MatRef<'_, f64>, rows: &[usize]) -> Mat<f64> {
    Mat::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

fn ring_radius(value: f64, scale: f64) -> Option<f64> {
    let ratio = value / scale;
    if ratio > 0.0 && ratio <= 1.0 {
        Some((-4.0 * ratio.ln()).sqrt())
    } else {
        None
    }
}

/// Latent pair `(U, V)` of one row, redrawn until both radii are real.
fn draw_latents(rng: &mut ChaCha8Rng, nx: &Normal<f64>, ny: &Normal<f64>) -> Result<(f64, f64)> {
    for _ in 0..MAX_ATTEMPTS {
        let z: f64 = rng.random();
        let u = z + 0.06 + nx.sample(rng);
        let v = z + 3.0 + ny.sample(rng);
        if ring_radius(u, 1.5).is_some() && ring_radius(v, 4.1).is_some() {
            return Ok((u, v));
        }
    }
    Err(Error::invalid("synthetic_circles", "row resampling did not converge"))
}

/// `N` pairs of noisy concentric-ring points sharing a latent `Z ~ U[0,1]`.
///
/// `U = Z + 0.06 + η_x`, `V = Z + 3 + η_y` with Gaussian noise of variance
/// 0.02 and 0.03; radii `sqrt(-4 log(U/1.5))` and `sqrt(-4 log(V/4.1))`
/// with independent uniform angles. Rows with an invalid logarithm argument
/// are redrawn.
pub fn synthetic_circles(n: usize, seed: u64) -> Result<PairedDataset> {
    if n < 1 {
        return Err(Error::invalid("N", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = Normal::new(0.0, NOISE_VAR_X.sqrt()).expect("valid normal");
    let ny = Normal::new(0.0, NOISE_VAR_Y.sqrt()).expect("valid normal");
    let mut x = Mat::zeros(n, 2);
    let mut y = Mat::zeros(n, 2);
    for i in 0..n {
        let (u, v) = draw_latents(&mut rng, &nx, &ny)?;
        let rx = ring_radius(u, 1.5).expect("checked");
        let ry = ring_radius(v, 4.1).expect("checked");
        let tx = rng.random::<f64>() * 2.0 * PI;
        let ty = rng.random::<f64>() * 2.0 * PI;
        x[(i, 0)] = rx * tx.cos();
        x[(i, 1)] = rx * tx.sin();
        y[(i, 0)] = ry * ty.cos();
        y[(i, 1)] = ry * ty.sin();
    }
    Ok(PairedDataset {
        x,
        y,
        split: vec![Split::Train; n],
        seed,
    })
}

/// `train:tune:test` as row counts or as fractions of the data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SplitSpec {
    Counts([usize; 3]),
    Fractions([f64; 3]),
}

impl std::str::FromStr for SplitSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::invalid("split", format!("expected train:tune:test, got `{s}`")));
        }
        if let Ok(c) = parts
            .iter()
            .map(|p| p.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
        {
            return Ok(SplitSpec::Counts([c[0], c[1], c[2]]));
        }
        let f = parts
            .iter()
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::invalid("split", e.to_string()))?;
        if f.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("split", "fractions must be nonnegative and sum to 1"));
        }
        Ok(SplitSpec::Fractions([f[0], f[1], f[2]]))
    }
}

impl SplitSpec {
    /// Row counts for a dataset of `n` rows.
    pub fn counts(&self, n: usize) -> Result<[usize; 3]> {
        match *self {
            SplitSpec::Counts(c) => {
                if c.iter().sum::<usize>() != n {
                    return Err(Error::invalid(
                        "split",
                        format!("counts {c:?} do not add up to {n} rows"),
                    ));
                }
                Ok(c)
            }
            SplitSpec::Fractions(f) => {
                let train = ((f[0] * n as f64).round() as usize).min(n);
                let tune = ((f[1] * n as f64).round() as usize).min(n - train);
                Ok([train, tune, n - train - tune])
            }
        }
    }
}

/// Shuffles rows with `seed` and tags them train, tune and test in order.
pub fn shuffle_and_split(x: Mat<f64>, y: Mat<f64>, spec: &SplitSpec, seed: u64) -> Result<PairedDataset> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.nrows(),
        });
    }
    let [a, b, _] = spec.counts(n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let split = (0..n)
        .map(|i| match i {
            i if i < a => Split::Train,
            i if i < a + b => Split::Tune,
            _ => Split::Test,
        })
        .collect();
    Ok(PairedDataset {
        x: take_rows(x.as_ref(), &order),
        y: take_rows(y.as_ref(), &order),
        split,
        seed,
    })
}

/// Reads a headerless (or auto-detected header) numeric CSV file.
pub fn read_csv_matrix(path: &Path) -> Result<Mat<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Err(_) if k == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    line,
                    message: e.to_string(),
                })
            }
            Ok(v) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Parse {
                        line,
                        message: "non-finite value".into(),
                    });
                }
                if let Some(first) = rows.first() {
                    if first.len() != v.len() {
                        return Err(Error::Parse {
                            line,
                            message: format!("expected {} columns, found {}", first.len(), v.len()),
                        });
                    }
                }
                rows.push(v);
            }
        }
    }
    Ok(crate::linalg::mat_from_rows(&rows))
}

/// Loads two row-aligned CSV files, shuffles with `seed` and splits.
pub fn load_paired_csv(path_x: &Path, path_y: &Path, split: &SplitSpec, seed: u64) -> Result<PairedDataset> {
    let x = read_csv_matrix(path_x)?;
    let y = read_csv_matrix(path_y)?;
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.nrows(),
        });
    }
    shuffle_and_split(x, y, split, seed)
}

/// Writes a matrix as headerless CSV.
pub fn write_csv(path: &Path, m: MatRef<'_, f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| m[(i, j)].to_string()))?;
    }
    w.flush()?;
    Ok(())
}
