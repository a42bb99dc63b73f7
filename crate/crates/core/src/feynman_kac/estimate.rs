use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Estimate {
        Estimate {
            mean: value,
            std_error: 0.0,
            samples: 1,
        }
    }

    /// Whether `|mean - target| <= k·std_error + slack`.
    pub fn agrees_with(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error + slack
    }
}

/// Monte Carlo parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McParams {
    pub particles: usize,
    pub seed: u64,
    /// Sub-steps per grid step used for the Brownian part of the joint lift.
    #[serde(default = "default_subgrid")]
    pub subgrid: usize,
}

fn default_subgrid() -> usize {
    4
}

impl McParams {
    pub fn new(particles: usize, seed: u64) -> McParams {
        McParams {
            particles,
            seed,
            subgrid: default_subgrid(),
        }
    }

    pub fn with_subgrid(mut self, subgrid: usize) -> McParams {
        self.subgrid = subgrid;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::InvalidMc(format!("need at least 2 particles, got {}", self.particles)));
        }
        if self.subgrid == 0 {
            return Err(Error::InvalidMc("subgrid must be positive".into()));
        }
        Ok(())
    }
}

/// Running sum of `f_i·exp(l_i)` kept relative to the largest log-weight
/// seen so far.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LogAccumulator {
    shift: f64,
    sum: f64,
    sum_sq: f64,
    n: usize,
}

impl Default for LogAccumulator {
    fn default() -> Self {
        LogAccumulator {
            shift: f64::NEG_INFINITY,
            sum: 0.0,
            sum_sq: 0.0,
            n: 0,
        }
    }
}

impl LogAccumulator {
    fn rescale(&mut self, shift: f64) {
        if shift > self.shift {
            if self.shift > f64::NEG_INFINITY {
                let r = (self.shift - shift).exp();
                self.sum *= r;
                self.sum_sq *= r * r;
            }
            self.shift = shift;
        }
    }

    #[inline]
    pub fn push(&mut self, f: f64, log_weight: f64) {
        self.n += 1;
        if log_weight == f64::NEG_INFINITY {
            return;
        }
        self.rescale(log_weight);
        let v = f * (log_weight - self.shift).exp();
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn merge(mut self, other: LogAccumulator) -> LogAccumulator {
        if other.shift > f64::NEG_INFINITY {
            self.rescale(other.shift);
            let r = (other.shift - self.shift).exp();
            self.sum += other.sum * r;
            self.sum_sq += other.sum_sq * r * r;
        }
        self.n += other.n;
        self
    }

    /// `scale · mean(f·e^l)` with its standard error.
    pub fn finish(&self, scale: f64) -> Result<Estimate> {
        if self.n == 0 {
            return Err(Error::TooFewSamples(0));
        }
        if self.shift == f64::NEG_INFINITY {
            return Ok(Estimate {
                mean: 0.0,
                std_error: 0.0,
                samples: self.n,
            });
        }
        let factor = self.shift.exp();
        if !factor.is_finite() {
            return Err(Error::WeightOverflow(self.shift));
        }
        let n = self.n as f64;
        let m1 = self.sum / n;
        let se = if self.n > 1 {
            let var = (self.sum_sq / n - m1 * m1).max(0.0) * n / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Ok(Estimate {
            mean: scale * factor * m1,
            std_error: (scale * factor * se).abs(),
            samples: self.n,
        })
    }
}

/// Merge accumulators as a balanced binary tree in index order.
pub(crate) fn pairwise_merge(items: &[LogAccumulator]) -> LogAccumulator {
    match items.len() {
        0 => LogAccumulator::default(),
        1 => items[0],
        n => pairwise_merge(&items[..n / 2]).merge(pairwise_merge(&items[n / 2..])),
    }
}

/// Fixed-size chunk of particle indices processed by one task. The chunk
/// layout depends only on the particle count, so results do not depend on
/// the thread count.
pub(crate) const CHUNK: usize = 256;

/// Run `f` over particle chunks in parallel and collect results in order.
pub(crate) fn map_chunks<T, F>(particles: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> Result<T> + Sync,
{
    let chunks = particles.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(particles)))
        .collect()
}

/// Estimate `scale · mean(f_i e^{l_i})` from samples, in pairwise order.
pub fn weighted_mean(values: &[f64], log_weights: &[f64], scale: f64) -> Result<Estimate> {
    let accs: Vec<LogAccumulator> = values
        .chunks(CHUNK)
        .zip(log_weights.chunks(CHUNK))
        .map(|(v, l)| {
            let mut acc = LogAccumulator::default();
            for (f, lw) in v.iter().zip(l) {
                acc.push(*f, *lw);
            }
            acc
        })
        .collect();
    pairwise_merge(&accs).finish(scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_weights_are_exact() {
        let lw = vec![0.37; 1000];
        let f = vec![1.0; 1000];
        let est = weighted_mean(&f, &lw, 2.5).unwrap();
        assert_eq!(est.mean, 2.5 * 0.37f64.exp());
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn matches_direct_mean() {
        let lw: Vec<f64> = (0..700).map(|i| ((i * 37) % 11) as f64 * 0.1 - 0.3).collect();
        let f: Vec<f64> = (0..700).map(|i| (i as f64 * 0.01).sin()).collect();
        let direct: f64 = f.iter().zip(&lw).map(|(a, b)| a * b.exp()).sum::<f64>() / 700.0;
        let est = weighted_mean(&f, &lw, 1.0).unwrap();
        assert!((est.mean - direct).abs() < 1e-13);
    }

    #[test]
    fn overflow_guard() {
        let est = weighted_mean(&[1.0, 1.0], &[800.0, 790.0], 1.0);
        assert!(matches!(est, Err(Error::WeightOverflow(_))));
        // large but cancelling log-weights stay finite relative to each other
        let ok = weighted_mean(&[1.0, 1.0], &[700.0, 690.0], 1.0).unwrap();
        assert!(ok.mean.is_finite());
    }

    #[test]
    fn invalid_params() {
        assert!(McParams::new(1, 0).validate().is_err());
        assert!(McParams::new(10, 0).with_subgrid(0).validate().is_err());
    }
}
