use serde::{Deserialize, Serialize};

use super::fields::{Augmented, VectorFields};
use super::solver::{integrate_range, warn_smoothness, DavieWorkspace, StatePath};
use crate::error::{ensure_dim, Result};
use crate::rng::NormalSource;
use crate::roughpath::RoughPath;

/// Joint lift `Z = (B, W)` of an `m`-dimensional Brownian motion and a
/// deterministic rough path `W` of dimension `e`.
///
/// Components `0..m` are Brownian, `m..m+e` follow `W`. With
/// `ℤ^{ab} = ∫ Z^a dZ^b` the second level has blocks
///
/// ```text
/// ℤ = [ 𝔹 (Itô)      ∫B⊗dW ]
///     [ ∫W⊗dB        𝕎     ]
/// ```
///
/// `𝔹` and `∫B⊗dW` are left-point sums on `r` sub-steps per grid step (the
/// latter against the linear interpolant of `W`), and `∫W⊗dB` is set to
/// `W⊗B - (∫B⊗dW)ᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointLift {
    path: RoughPath,
    brownian_dim: usize,
    subgrid: usize,
}

impl JointLift {
    pub fn path(&self) -> &RoughPath {
        &self.path
    }

    pub fn brownian_dim(&self) -> usize {
        self.brownian_dim
    }

    pub fn rough_dim(&self) -> usize {
        self.path.dim() - self.brownian_dim
    }

    pub fn subgrid(&self) -> usize {
        self.subgrid
    }

    pub fn brownian_increment(&self, k: usize) -> &[f64] {
        &self.path.step_first(k)[..self.brownian_dim]
    }

    fn block(&self, k: usize, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Vec<f64> {
        let n = self.path.dim();
        let s = self.path.step_second(k);
        rows.flat_map(|i| cols.clone().map(move |j| s[i * n + j])).collect()
    }

    /// `𝔹_{t_k, t_{k+1}}` (`m × m`).
    pub fn ito_area(&self, k: usize) -> Vec<f64> {
        let m = self.brownian_dim;
        self.block(k, 0..m, 0..m)
    }

    /// `∫ B ⊗ dW` over step `k` (`m × e`).
    pub fn cross_bw(&self, k: usize) -> Vec<f64> {
        let (m, n) = (self.brownian_dim, self.path.dim());
        self.block(k, 0..m, m..n)
    }

    /// `∫ W ⊗ dB` over step `k` (`e × m`).
    pub fn cross_wb(&self, k: usize) -> Vec<f64> {
        let (m, n) = (self.brownian_dim, self.path.dim());
        self.block(k, m..n, 0..m)
    }

    /// Largest `|∫W⊗dB + (∫B⊗dW)ᵀ - W⊗B|` over grid steps.
    pub fn integration_by_parts_residual(&self) -> f64 {
        let (m, e) = (self.brownian_dim, self.rough_dim());
        let mut worst: f64 = 0.0;
        for k in 0..self.path.steps() {
            let z = self.path.step_first(k);
            let bw = self.cross_bw(k);
            let wb = self.cross_wb(k);
            for j in 0..e {
                for a in 0..m {
                    let identity = z[m + j] * z[a] - bw[a * e + j];
                    worst = worst.max((wb[j * m + a] - identity).abs());
                }
            }
        }
        worst
    }

    /// Redraw the Brownian part in place for a new sample, keeping `W`.
    pub fn refill<S: NormalSource + ?Sized>(&mut self, w: &RoughPath, source: &mut S) {
        let m = self.brownian_dim;
        let r = self.subgrid;
        let e = w.dim();
        let n = m + e;
        let grid = w.grid().clone();
        let mut running = vec![0.0; m];
        let mut left_sum = vec![0.0; m];
        let mut ito = vec![0.0; m * m];
        let mut db = vec![0.0; m];
        let (first, second) = self.path.steps_mut();
        for k in 0..grid.steps() {
            let scale = (grid.dt(k) / r as f64).sqrt();
            running.iter_mut().for_each(|v| *v = 0.0);
            left_sum.iter_mut().for_each(|v| *v = 0.0);
            ito.iter_mut().for_each(|v| *v = 0.0);
            for _ in 0..r {
                source.fill_normals(&mut db);
                for a in 0..m {
                    left_sum[a] += running[a];
                    for b in 0..m {
                        ito[a * m + b] += running[a] * db[b] * scale;
                    }
                }
                for a in 0..m {
                    running[a] += db[a] * scale;
                }
            }
            let wk = w.step_first(k);
            let wwk = w.step_second(k);
            let z = &mut first[k * n..(k + 1) * n];
            z[..m].copy_from_slice(&running);
            z[m..].copy_from_slice(wk);
            let s = &mut second[k * n * n..(k + 1) * n * n];
            for a in 0..m {
                for b in 0..m {
                    s[a * n + b] = ito[a * m + b];
                }
                for j in 0..e {
                    let bw = left_sum[a] * wk[j] / r as f64;
                    s[a * n + m + j] = bw;
                    s[(m + j) * n + a] = wk[j] * running[a] - bw;
                }
            }
            for i in 0..e {
                for j in 0..e {
                    s[(m + i) * n + m + j] = wwk[i * e + j];
                }
            }
        }
    }
}

/// Simulate the joint lift of `w` with an `m`-dimensional Brownian motion.
pub fn build_joint_lift<S: NormalSource + ?Sized>(
    w: &RoughPath,
    source: &mut S,
    m: usize,
    subgrid: usize,
) -> Result<JointLift> {
    let n = m + w.dim();
    let steps = w.steps();
    let mut base = vec![0.0; n];
    base[m..].copy_from_slice(w.base_point());
    let path = RoughPath::from_steps(
        w.grid().clone(),
        w.alpha(),
        base,
        vec![0.0; steps * n],
        vec![0.0; steps * n * n],
    )?;
    let mut lift = JointLift {
        path,
        brownian_dim: m,
        subgrid: subgrid.max(1),
    };
    lift.refill(w, source);
    Ok(lift)
}

/// Output of [`solve_rough_sde`].
#[derive(Clone, Debug, PartialEq)]
pub struct RoughSdeSolution {
    pub path: StatePath,
    /// Jacobian `∂X_t/∂x_0` per grid point (`len × d × d`), if requested.
    pub jacobian: Option<Vec<f64>>,
}

/// Solve `dX = b dt + σ(X) dB + β(X) d𝐖` as an RDE against the joint lift.
///
/// `fields` has driver dimension `m + e`: fields `0..m` are `σ_1..σ_m`,
/// fields `m..m+e` are `β_1..β_e`.
pub fn solve_rough_sde<F: VectorFields + ?Sized>(
    fields: &F,
    lift: &JointLift,
    x0: &[f64],
    with_jacobian: bool,
) -> Result<RoughSdeSolution> {
    let d = fields.state_dim();
    ensure_dim(d, x0.len())?;
    ensure_dim(fields.driver_dim(), lift.path().dim())?;
    warn_smoothness(fields, 3, "solve_rough_sde");
    let z = lift.path();
    let n = z.steps();
    if !with_jacobian {
        let mut states = Vec::with_capacity((n + 1) * d);
        states.extend_from_slice(x0);
        let mut x = x0.to_vec();
        let mut ws = DavieWorkspace::for_fields(fields);
        integrate_range(fields, z, 0, n, &mut x, &mut ws, |_, x| states.extend_from_slice(x))?;
        return Ok(RoughSdeSolution {
            path: StatePath {
                grid: z.grid().clone(),
                dim: d,
                states,
            },
            jacobian: None,
        });
    }
    let aug = Augmented(fields);
    let mut x = x0.to_vec();
    for i in 0..d {
        x.extend((0..d).map(|j| if i == j { 1.0 } else { 0.0 }));
    }
    let mut states = Vec::with_capacity((n + 1) * d);
    let mut jac = Vec::with_capacity((n + 1) * d * d);
    states.extend_from_slice(&x[..d]);
    jac.extend_from_slice(&x[d..]);
    let mut ws = DavieWorkspace::for_fields(&aug);
    integrate_range(&aug, z, 0, n, &mut x, &mut ws, |_, x| {
        states.extend_from_slice(&x[..d]);
        jac.extend_from_slice(&x[d..]);
    })?;
    Ok(RoughSdeSolution {
        path: StatePath {
            grid: z.grid().clone(),
            dim: d,
            states,
        },
        jacobian: Some(jac),
    })
}

/// Mean and variance of a sample with standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
}

impl MomentSummary {
    pub fn of(sample: &[f64]) -> MomentSummary {
        let n = sample.len() as f64;
        let mean = sample.iter().sum::<f64>() / n;
        let c2 = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let c4 = sample.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        MomentSummary {
            mean,
            mean_se: (c2 / n).sqrt(),
            variance: c2,
            variance_se: ((c4 - c2 * c2).max(0.0) / n).sqrt(),
        }
    }
}
