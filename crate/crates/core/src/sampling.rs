//! Column sampling plans with importance weights.
//!
//! Draws come from a ChaCha8 stream keyed by the plan seed. Draw `j`
//! consumes the 64-bit word pair starting at word position `2j`, so a plan
//! can be extended later and the result equals a plan sampled at the larger
//! size from the start.

use std::fmt::Write as _;
use std::sync::Arc;

use faer::Mat;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::leverage::SamplingDistribution;

/// Sampled landmark indices (0-based, duplicates allowed) with weights
/// `1 / sqrt(M p_i)`.
#[derive(Clone, Debug)]
pub struct SamplingPlan {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub dist: Arc<SamplingDistribution>,
    pub seed: u64,
    pub strategy: String,
}

fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

fn draw(cum: &[f64], u: f64) -> usize {
    let target = u * cum[cum.len() - 1];
    cum.partition_point(|&c| c <= target).min(cum.len() - 1)
}

fn draws(dist: &SamplingDistribution, seed: u64, start: usize, count: usize) -> Vec<usize> {
    let cum = cumulative(&dist.p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(2 * start as u128);
    (0..count).map(|_| draw(&cum, uniform01(&mut rng))).collect()
}

impl SamplingPlan {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n(&self) -> usize {
        self.dist.len()
    }

    fn reweight(&mut self) {
        let m = self.indices.len() as f64;
        self.weights = self
            .indices
            .iter()
            .map(|&i| 1.0 / (m * self.dist.p[i]).sqrt())
            .collect();
    }

    /// Unscaled weights `1 / sqrt(p_i)`, which differ from `weights` by the
    /// common factor `sqrt(M)`.
    pub fn unscaled_weights(&self) -> Vec<f64> {
        self.indices.iter().map(|&i| 1.0 / self.dist.p[i].sqrt()).collect()
    }

    /// Plan over explicit indices with unit weights (standard Nyström).
    pub fn unit(n: usize, indices: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        let weights = vec![1.0; indices.len()];
        Ok(Self {
            indices,
            weights,
            dist: Arc::new(SamplingDistribution::uniform(n)),
            seed: 0,
            strategy: "fixed".into(),
        })
    }

    /// Every column exactly once with unit weights.
    pub fn full(n: usize) -> Self {
        Self::unit(n, (0..n).collect()).expect("indices in range")
    }

    /// The first `m` draws of this plan, reweighted for size `m`.
    pub fn prefix(&self, m: usize) -> Self {
        let mut p = self.clone();
        p.indices.truncate(m);
        if self.strategy == "fixed" {
            p.weights.truncate(m);
        } else {
            p.reweight();
        }
        p
    }

    /// Dense `N x M` sampling matrix.
    pub fn dense_matrix(&self) -> Mat<f64> {
        let mut s = Mat::zeros(self.n(), self.len());
        for (j, (&i, &w)) in self.indices.iter().zip(&self.weights).enumerate() {
            s[(i, j)] = w;
        }
        s
    }

    /// Text record holding the seed, strategy, size and indices.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "plan v1");
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "strategy {}", self.strategy);
        let _ = writeln!(out, "n {}", self.n());
        let idx: Vec<String> = self.indices.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "indices {}", idx.join(","));
        out
    }

    /// Rebuilds a plan from its record and the distribution it was drawn from.
    pub fn from_record(text: &str, dist: Arc<SamplingDistribution>) -> Result<Self> {
        let mut seed = None;
        let mut strategy = None;
        let mut indices = None;
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line == "plan v1" {
                continue;
            }
            let (key, val) = line.split_once(' ').unwrap_or((line, ""));
            let perr = |m: String| Error::Parse {
                line: ln + 1,
                message: m,
            };
            match key {
                "seed" => seed = Some(val.parse::<u64>().map_err(|e| perr(e.to_string()))?),
                "strategy" => strategy = Some(val.to_string()),
                "n" => {
                    let n: usize = val.parse().map_err(|e: std::num::ParseIntError| perr(e.to_string()))?;
                    if n != dist.len() {
                        return Err(Error::DimensionMismatch {
                            expected: dist.len(),
                            got: n,
                        });
                    }
                }
                "indices" => {
                    let v: std::result::Result<Vec<usize>, _> = if val.is_empty() {
                        Ok(Vec::new())
                    } else {
                        val.split(',').map(|s| s.trim().parse::<usize>()).collect()
                    };
                    indices = Some(v.map_err(|e| perr(e.to_string()))?);
                }
                other => return Err(perr(format!("unknown key `{other}`"))),
            }
        }
        let indices = indices.ok_or(Error::Parse {
            line: 0,
            message: "missing indices".into(),
        })?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= dist.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: dist.len(),
            });
        }
        let strategy = strategy.unwrap_or_else(|| "custom".into());
        let mut plan = Self {
            indices,
            weights: Vec::new(),
            dist,
            seed: seed.unwrap_or(0),
            strategy,
        };
        if plan.strategy == "fixed" {
            plan.weights = vec![1.0; plan.indices.len()];
        } else {
            plan.reweight();
        }
        Ok(plan)
    }
}

/// Draws `m` indices i.i.d. from `dist`.
pub fn sample(dist: &SamplingDistribution, m: usize, seed: u64) -> Result<SamplingPlan> {
    sample_labeled(Arc::new(dist.clone()), m, seed, "custom")
}

/// Like [`sample`] with a shared distribution and a strategy label.
pub fn sample_labeled(dist: Arc<SamplingDistribution>, m: usize, seed: u64, strategy: &str) -> Result<SamplingPlan> {
    if m < 1 {
        return Err(Error::invalid("M", "must be at least 1"));
    }
    if dist.is_empty() {
        return Err(Error::invalid("dist", "empty distribution"));
    }
    let indices = draws(&dist, seed, 0, m);
    let mut plan = SamplingPlan {
        indices,
        weights: Vec::new(),
        dist,
        seed,
        strategy: strategy.to_string(),
    };
    plan.reweight();
    Ok(plan)
}

/// Appends `extra` draws continuing the plan's random stream; all weights
/// are recomputed for the new size.
pub fn extend(plan: &SamplingPlan, extra: usize) -> Result<SamplingPlan> {
    if extra < 1 {
        return Err(Error::invalid("extra", "must be at least 1"));
    }
    let mut out = plan.clone();
    out.indices.extend(draws(&plan.dist, plan.seed, plan.len(), extra));
    out.reweight();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use proptest::prelude::*;

    #[test]
    fn point_mass() {
        let d = SamplingDistribution::from_weights(&[0.0, 0.0, 0.0, 1.0, 0.0], 1.0).unwrap();
        let p = sample(&d, 4, 9).unwrap();
        assert_eq!(p.indices, vec![3, 3, 3, 3]);
        assert!(p.weights.iter().all(|w| (w - 0.5).abs() < 1e-5));
    }

    #[test]
    fn uniform_weights() {
        let d = SamplingDistribution::uniform(12);
        let p = sample(&d, 5, 1).unwrap();
        let expect = (12.0f64 / 5.0).sqrt();
        assert!(p.weights.iter().all(|w| (w - expect).abs() < 1e-12));
        let q = extend(&sample(&d, 2, 1).unwrap(), 1).unwrap();
        let expect = (12.0f64 / 3.0).sqrt();
        assert!(q.weights.iter().all(|w| (w - expect).abs() < 1e-12));
        assert!(sample(&d, 0, 1).is_err());
        assert!(extend(&p, 0).is_err());
    }

    #[test]
    fn frequencies_follow_distribution() {
        let d = SamplingDistribution::from_weights(&[0.5, 0.25, 0.25], 1.0).unwrap();
        let m = 100_000;
        let p = sample(&d, m, 2024).unwrap();
        let mut counts = [0usize; 3];
        for &i in &p.indices {
            counts[i] += 1;
        }
        for (c, q) in counts.iter().zip([0.5, 0.25, 0.25]) {
            assert!((*c as f64 / m as f64 - q).abs() < 0.01);
        }
    }

    #[test]
    fn extension_replays_stream() {
        let d = SamplingDistribution::from_weights(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], 1.0).unwrap();
        let five = sample(&d, 5, 31).unwrap();
        let ten = extend(&five, 5).unwrap();
        assert_eq!(&ten.indices[..5], &five.indices[..]);
        assert_eq!(ten.indices, sample(&d, 10, 31).unwrap().indices);
        let eleven = extend(&ten, 1).unwrap();
        assert_eq!(eleven.prefix(10).indices, ten.indices);
        assert_eq!(eleven.prefix(10).weights, ten.weights);
    }

    #[test]
    fn sts_matches_dense() {
        let d = SamplingDistribution::from_weights(&[3.0, 1.0, 0.5, 2.0, 1.0, 1.0, 0.2, 0.3], 1.0).unwrap();
        let p = sample(&d, 12, 5).unwrap();
        let s = p.dense_matrix();
        let sst = &s * s.transpose();
        let mut expect = Mat::<f64>::zeros(8, 8);
        for &i in &p.indices {
            expect[(i, i)] += 1.0 / (12.0 * d.p[i]);
        }
        assert!(max_abs((&sst - &expect).as_ref()) < 1e-12);
    }

    #[test]
    fn record_round_trip() {
        let d = Arc::new(SamplingDistribution::from_weights(&[1.0, 2.0, 3.0, 4.0], 1.0).unwrap());
        let p = sample_labeled(d.clone(), 7, 44, "ridge").unwrap();
        let back = SamplingPlan::from_record(&p.to_record(), d).unwrap();
        assert_eq!(back.indices, p.indices);
        assert_eq!(back.weights, p.weights);
        assert_eq!(back.seed, 44);
        assert_eq!(back.strategy, "ridge");
    }

    proptest! {
        #[test]
        fn deterministic(seed in any::<u64>(), m in 1usize..50) {
            let d = SamplingDistribution::from_weights(&[0.3, 0.0, 1.0, 2.0, 0.1], 1.0).unwrap();
            let a = sample(&d, m, seed).unwrap();
            let b = sample(&d, m, seed).unwrap();
            prop_assert_eq!(&a.indices, &b.indices);
            for (&i, &w) in a.indices.iter().zip(&a.weights) {
                prop_assert!(i < 5);
                prop_assert_eq!(w, 1.0 / (m as f64 * d.p[i]).sqrt());
            }
        }
    }
}
