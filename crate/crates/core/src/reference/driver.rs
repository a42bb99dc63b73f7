use crate::error::{Error, Result};
use crate::expr::{Compiled, Expr, Wrt};
use crate::roughpath::{GeometricRoughPath, Grid, RoughPath};

/// 8-point Gauss–Legendre nodes and weights on `[-1, 1]`.
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// A `C¹` path `t ↦ W_t ∈ R^e` given by expressions in `t`, sampled on a
/// grid together with its derivative `Ẇ`.
#[derive(Clone, Debug)]
pub struct SmoothDriver {
    source: Vec<Expr>,
    value: Vec<Compiled>,
    rate: Vec<Compiled>,
    grid: Grid,
    values: Vec<f64>,
    rates: Vec<f64>,
}

impl SmoothDriver {
    pub fn new(components: Vec<Expr>, grid: Grid) -> Result<SmoothDriver> {
        if components.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if components.iter().any(|c| c.max_var().is_some()) {
            return Err(Error::Config {
                field: "driver".into(),
                msg: "smooth driver components may only depend on t".into(),
            });
        }
        let rate_exprs = components.iter().map(|c| c.diff(Wrt::Time)).collect::<Result<Vec<_>>>()?;
        let value: Vec<Compiled> = components.iter().map(|c| c.compile()).collect();
        let rate: Vec<Compiled> = rate_exprs.iter().map(|c| c.compile()).collect();
        let mut values = Vec::with_capacity(grid.len() * value.len());
        let mut rates = Vec::with_capacity(grid.len() * value.len());
        for &t in grid.times() {
            values.extend(value.iter().map(|f| f.eval(&[], t)));
            rates.extend(rate.iter().map(|f| f.eval(&[], t)));
        }
        Ok(SmoothDriver {
            source: components,
            value,
            rate,
            grid,
            values,
            rates,
        })
    }

    /// Components parsed from strings in `t`, uniform grid on `[0, horizon]`.
    pub fn parse(components: &[&str], horizon: f64, steps: usize) -> Result<SmoothDriver> {
        let exprs = components.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>()?;
        SmoothDriver::new(exprs, Grid::uniform(horizon, steps)?)
    }

    pub fn dim(&self) -> usize {
        self.value.len()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn source(&self) -> &[Expr] {
        &self.source
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    /// Grid samples of `W` (`len × e`).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Grid samples of `Ẇ` (`len × e`).
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn value_at(&self, t: f64, out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.value) {
            *o = f.eval(&[], t);
        }
    }

    pub fn rate_at(&self, t: f64, out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.rate) {
            *o = f.eval(&[], t);
        }
    }

    /// Largest `|ΔW/Δt - ½(Ẇ_s + Ẇ_t)|` over grid steps; `O(Δt²)`.
    pub fn derivative_consistency(&self) -> f64 {
        let e = self.dim();
        let mut worst: f64 = 0.0;
        for k in 0..self.grid.steps() {
            let dt = self.grid.dt(k);
            for i in 0..e {
                let q = (self.values[(k + 1) * e + i] - self.values[k * e + i]) / dt;
                let mid = 0.5 * (self.rates[k * e + i] + self.rates[(k + 1) * e + i]);
                worst = worst.max((q - mid).abs());
            }
        }
        worst
    }

    /// Largest `|Ẇ|_∞` on the grid.
    pub fn max_rate(&self) -> f64 {
        self.rates.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Canonical lift on the grid: exact increments and
    /// `𝕎_{s,t} = ∫_s^t W_{s,r} ⊗ Ẇ_r dr` by Gauss–Legendre quadrature,
    /// with the symmetric part set to `½ W_{s,t} ⊗ W_{s,t}`.
    pub fn canonical_lift(&self, alpha: f64) -> Result<GeometricRoughPath> {
        let e = self.dim();
        let n = self.grid.steps();
        let mut first = Vec::with_capacity(n * e);
        let mut second = Vec::with_capacity(n * e * e);
        let mut w = vec![0.0; e];
        let mut r = vec![0.0; e];
        let mut area = vec![0.0; e * e];
        for k in 0..n {
            let (s, t) = (self.grid.time(k), self.grid.time(k + 1));
            let ws = &self.values[k * e..(k + 1) * e];
            let delta: Vec<f64> = (0..e).map(|i| self.values[(k + 1) * e + i] - ws[i]).collect();
            area.iter_mut().for_each(|v| *v = 0.0);
            let half = 0.5 * (t - s);
            for (node, weight) in GL_NODES.iter().zip(GL_WEIGHTS) {
                let u = s + half * (node + 1.0);
                self.value_at(u, &mut w);
                self.rate_at(u, &mut r);
                for i in 0..e {
                    for j in 0..e {
                        area[i * e + j] += weight * half * (w[i] - ws[i]) * r[j];
                    }
                }
            }
            first.extend_from_slice(&delta);
            for i in 0..e {
                for j in 0..e {
                    let anti = 0.5 * (area[i * e + j] - area[j * e + i]);
                    second.push(0.5 * delta[i] * delta[j] + anti);
                }
            }
        }
        let base = self.values[..e].to_vec();
        GeometricRoughPath::try_new(RoughPath::from_steps(self.grid.clone(), alpha, base, first, second)?)
    }
}
