use serde::{Deserialize, Serialize};

use crate::feynman_kac::{fit_decay_constant, BackwardField};

/// Central differences along `axis` (one-sided at the ends).
fn diff_axis(values: &[f64], axes: &[Vec<f64>], axis: usize) -> Vec<f64> {
    let n = axes[axis].len();
    let stride: usize = axes[axis + 1..].iter().map(|a| a.len()).product();
    let x = &axes[axis];
    (0..values.len())
        .map(|p| {
            let i = (p / stride) % n;
            let (lo, hi) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            let base = p - i * stride;
            (values[base + hi * stride] - values[base + lo * stride]) / (x[hi] - x[lo])
        })
        .collect()
}

/// A fitted decay constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub constant: f64,
    pub order: u8,
}

/// Smallest `c <= c_max` with `|D^k u_r(x)| <= c·e^{-|x|/c}` for `k <= order`
/// at every grid point of record `r`, derivatives by finite differences.
/// `None` when no such `c` exists.
pub fn fit_exp_decay(field: &BackwardField, r: usize, order: u8, c_max: f64) -> Option<DecayFit> {
    let axes = field.space.axes();
    let dim = axes.len();
    let points = field.space.points();
    let radius: Vec<f64> = points.iter().map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut bound: Vec<f64> = field.values[r].iter().map(|v| v.abs()).collect();
    let mut level: Vec<(usize, Vec<f64>)> = vec![(0, field.values[r].clone())];
    for _ in 0..order {
        let mut next = Vec::new();
        for (lowest, v) in &level {
            for i in *lowest..dim {
                let dv = diff_axis(v, axes, i);
                for (b, x) in bound.iter_mut().zip(&dv) {
                    *b = b.max(x.abs());
                }
                next.push((i, dv));
            }
        }
        level = next;
    }
    let samples: Vec<(f64, f64)> = radius.into_iter().zip(bound).collect();
    fit_decay_constant(&samples, c_max).map(|constant| DecayFit { constant, order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feynman_kac::SpaceGrid;

    fn field(f: impl Fn(&[f64]) -> f64, dim: usize) -> BackwardField {
        let space = SpaceGrid::uniform(dim, 10.0, 401).unwrap();
        BackwardField::tabulate(vec![0], vec![0.0], space, "", |_, x| f(x)).unwrap()
    }

    #[test]
    fn pure_exponential() {
        let fit = fit_exp_decay(&field(|x| (-x[0].abs()).exp(), 1), 0, 0, 10.0 / 3.0).unwrap();
        assert!((fit.constant - 1.0).abs() < 1e-6, "{fit:?}");
    }

    #[test]
    fn constant_fails() {
        assert!(fit_exp_decay(&field(|_| 0.5, 1), 0, 1, 10.0 / 3.0).is_none());
    }

    #[test]
    fn translated_profile_keeps_constant() {
        let p = |s: f64| move |x: &[f64]| 0.4 * (-(1.0 + (x[0] - s).powi(2)).sqrt()).exp();
        let c0 = fit_exp_decay(&field(p(0.0), 1), 0, 2, 10.0 / 3.0).unwrap().constant;
        let c1 = fit_exp_decay(&field(p(0.05), 1), 0, 2, 10.0 / 3.0).unwrap().constant;
        assert!((c1 - c0).abs() < 0.1 * c0, "{c0} {c1}");
    }
}
