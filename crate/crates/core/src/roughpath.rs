//! Grid-sampled level-2 rough paths.
//!
//! A path over a grid `t_0 = 0 < t_1 < ... < t_N = T` is stored as its
//! consecutive increments `(W_{t_k,t_{k+1}}, 𝕎_{t_k,t_{k+1}})`. Increments
//! over any other pair of grid points are recovered with Chen's relation
//!
//! ```text
//! W_{s,u} = W_{s,t} + W_{t,u}
//! 𝕎_{s,u} = 𝕎_{s,t} + 𝕎_{t,u} + W_{s,t} ⊗ W_{t,u}
//! ```
//!
//! Second levels are `e × e` matrices in row-major order with the convention
//! `𝕎^{ij}_{s,t} = ∫_s^t W^i_{s,r} dW^j_r`.

use std::fs::File;
use std::io::{BufReader, Write};
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::rng::NormalSource;

/// Default subgrid refinement for simulated Lévy areas.
pub const DEFAULT_LEVY_REFINEMENT: usize = 16;

/// Strictly increasing time grid starting at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Grid {
    times: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Grid {
    type Error = Error;
    fn try_from(times: Vec<f64>) -> Result<Self> {
        Grid::new(times)
    }
}

impl From<Grid> for Vec<f64> {
    fn from(g: Grid) -> Self {
        g.times
    }
}

impl Grid {
    pub fn new(times: Vec<f64>) -> Result<Grid> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                times.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidGrid(format!("first time must be 0, got {}", times[0])));
        }
        for (k, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "times not strictly increasing at index {}: {} -> {}",
                    k + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(Grid { times })
    }

    /// `steps + 1` equispaced points on `[0, horizon]`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Grid> {
        if steps == 0 || !(horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "uniform grid needs steps > 0 and horizon > 0 (got {steps}, {horizon})"
            )));
        }
        // k * T / N keeps decimal grids such as k/10 exactly on their literals.
        let times = (0..=steps)
            .map(|k| horizon * k as f64 / steps as f64)
            .collect();
        Grid::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn max_step(&self) -> f64 {
        (0..self.steps()).map(|k| self.dt(k)).fold(0.0, f64::max)
    }

    pub fn min_step(&self) -> f64 {
        (0..self.steps())
            .map(|k| self.dt(k))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the grid point equal to `t` (to within `1e-12·T`).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let tol = 1e-12 * self.horizon();
        let pos = self.times.partition_point(|&s| s < t - tol);
        if pos < self.times.len() && (self.times[pos] - t).abs() <= tol {
            Ok(pos)
        } else {
            Err(Error::NotOnGrid(t))
        }
    }

    /// Indices `0, f, 2f, ...` plus the final index.
    pub fn coarse_indices(&self, factor: usize) -> Vec<usize> {
        let factor = factor.max(1);
        let mut idx: Vec<usize> = (0..self.len()).step_by(factor).collect();
        if *idx.last().unwrap() != self.steps() {
            idx.push(self.steps());
        }
        idx
    }

    pub fn subsample(&self, indices: &[usize]) -> Result<Grid> {
        let t0 = self.times[*indices.first().ok_or(Error::TooFewSamples(0))?];
        let times = indices
            .iter()
            .map(|&i| {
                self.times
                    .get(i)
                    .map(|t| t - t0)
                    .ok_or_else(|| Error::InvalidGrid(format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Grid::new(times)
    }

    /// Grid of `T - t`, reordered increasingly.
    pub fn reversed(&self) -> Grid {
        let t = self.horizon();
        let mut times: Vec<f64> = self.times.iter().rev().map(|s| t - s).collect();
        times[0] = 0.0;
        Grid { times }
    }
}

/// A level-2 increment `(W_{s,t}, 𝕎_{s,t})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Increment {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl Increment {
    pub fn zero(dim: usize) -> Increment {
        Increment {
            first: vec![0.0; dim],
            second: vec![0.0; dim * dim],
        }
    }

    pub fn new(first: Vec<f64>, second: Vec<f64>) -> Result<Increment> {
        ensure_dim(first.len() * first.len(), second.len())?;
        Ok(Increment { first, second })
    }

    /// Canonical lift of a straight segment: `(Δ, ½ Δ⊗Δ)`.
    pub fn linear(delta: &[f64]) -> Increment {
        let e = delta.len();
        let mut second = vec![0.0; e * e];
        for i in 0..e {
            for j in 0..e {
                second[i * e + j] = 0.5 * delta[i] * delta[j];
            }
        }
        Increment {
            first: delta.to_vec(),
            second,
        }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// Chen composition `self ∘ right`.
    pub fn chen_compose(&self, right: &Increment) -> Result<Increment> {
        ensure_dim(self.dim(), right.dim())?;
        let mut out = self.clone();
        out.extend(&right.first, &right.second);
        Ok(out)
    }

    /// In-place Chen composition with a right increment given as slices.
    #[inline]
    pub(crate) fn extend(&mut self, first: &[f64], second: &[f64]) {
        let e = self.first.len();
        for i in 0..e {
            let wi = self.first[i];
            for j in 0..e {
                self.second[i * e + j] += second[i * e + j] + wi * first[j];
            }
        }
        for (a, b) in self.first.iter_mut().zip(first) {
            *a += b;
        }
    }

    /// Group inverse `(-W, -𝕎 + W⊗W)`; equals `(-W, 𝕎ᵀ)` for geometric increments.
    pub fn inverse(&self) -> Increment {
        let e = self.dim();
        let mut second = vec![0.0; e * e];
        for i in 0..e {
            for j in 0..e {
                second[i * e + j] = -self.second[i * e + j] + self.first[i] * self.first[j];
            }
        }
        Increment {
            first: self.first.iter().map(|x| -x).collect(),
            second,
        }
    }

    /// `max |Sym(𝕎) - ½ W⊗W|`.
    pub fn geometricity_defect(&self) -> f64 {
        let e = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..e {
            for j in 0..e {
                let sym = 0.5 * (self.second[i * e + j] + self.second[j * e + i]);
                worst = worst.max((sym - 0.5 * self.first[i] * self.first[j]).abs());
            }
        }
        worst
    }

    pub fn first_norm(&self) -> f64 {
        norm(&self.first)
    }

    pub fn second_norm(&self) -> f64 {
        norm(&self.second)
    }
}

/// Free-function form of [`Increment::chen_compose`].
pub fn chen_compose(left: &Increment, right: &Increment) -> Result<Increment> {
    left.chen_compose(right)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 1.0 / 3.0 && alpha <= 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// Level-2 rough path on a grid. Chen's relation holds by construction;
/// geometricity is not assumed (Itô-type lifts are allowed here).
#[derive(Clone, Debug, PartialEq)]
pub struct RoughPath {
    grid: Grid,
    dim: usize,
    alpha: f64,
    base_point: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl RoughPath {
    /// Build from flat step arrays: `first` has `steps·e` entries and
    /// `second` has `steps·e²` entries.
    pub fn from_steps(
        grid: Grid,
        alpha: f64,
        base_point: Vec<f64>,
        first: Vec<f64>,
        second: Vec<f64>,
    ) -> Result<RoughPath> {
        check_alpha(alpha)?;
        let dim = base_point.len();
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        ensure_dim(grid.steps() * dim, first.len())?;
        ensure_dim(grid.steps() * dim * dim, second.len())?;
        Ok(RoughPath {
            grid,
            dim,
            alpha,
            base_point,
            first,
            second,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<RoughPath> {
        check_alpha(alpha)?;
        self.alpha = alpha;
        Ok(self)
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    #[inline]
    pub fn step_first(&self, k: usize) -> &[f64] {
        &self.first[k * self.dim..(k + 1) * self.dim]
    }

    #[inline]
    pub fn step_second(&self, k: usize) -> &[f64] {
        let e2 = self.dim * self.dim;
        &self.second[k * e2..(k + 1) * e2]
    }

    pub(crate) fn steps_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.first, &mut self.second)
    }

    pub fn step(&self, k: usize) -> Increment {
        Increment {
            first: self.step_first(k).to_vec(),
            second: self.step_second(k).to_vec(),
        }
    }

    /// Increment between grid indices `i <= j`.
    pub fn increment(&self, i: usize, j: usize) -> Increment {
        assert!(i <= j && j <= self.steps(), "bad index pair ({i}, {j})");
        let mut inc = Increment::zero(self.dim);
        for k in i..j {
            inc.extend(self.step_first(k), self.step_second(k));
        }
        inc
    }

    /// Increment between two times that lie on the grid.
    pub fn increment_between(&self, s: f64, t: f64) -> Result<Increment> {
        let i = self.grid.index_of(s)?;
        let j = self.grid.index_of(t)?;
        if i > j {
            return Err(Error::InvalidGrid(format!("interval [{s}, {t}] is reversed")));
        }
        Ok(self.increment(i, j))
    }

    /// Path values `W_{t_k}` for all grid points, flat (`len × e`).
    pub fn values(&self) -> Vec<f64> {
        let e = self.dim;
        let mut out = Vec::with_capacity(self.grid.len() * e);
        out.extend_from_slice(&self.base_point);
        for k in 0..self.steps() {
            for i in 0..e {
                let prev = out[k * e + i];
                out.push(prev + self.first[k * e + i]);
            }
        }
        out
    }

    pub fn geometricity_defect(&self) -> f64 {
        (0..self.steps())
            .map(|k| self.step(k).geometricity_defect())
            .fold(0.0, f64::max)
    }

    /// Time reversal `t ↦ W_{T-t}` with steps replaced by their group inverses.
    pub fn reversed(&self) -> RoughPath {
        let n = self.steps();
        let e = self.dim;
        let mut first = Vec::with_capacity(self.first.len());
        let mut second = Vec::with_capacity(self.second.len());
        for k in (0..n).rev() {
            let inv = self.step(k).inverse();
            first.extend_from_slice(&inv.first);
            second.extend_from_slice(&inv.second);
        }
        let values = self.values();
        RoughPath {
            grid: self.grid.reversed(),
            dim: e,
            alpha: self.alpha,
            base_point: values[n * e..].to_vec(),
            first,
            second,
        }
    }

    /// Image under `W ↦ -W` (second level unchanged).
    pub fn negated(&self) -> RoughPath {
        let mut out = self.clone();
        out.base_point.iter_mut().for_each(|x| *x = -*x);
        out.first.iter_mut().for_each(|x| *x = -*x);
        out
    }

    /// Driver for the adjoint (forward) problem on `[0, t_end]`: steps in
    /// reverse order, first levels kept, second levels transposed. This is
    /// the time reversal of `-W`, i.e. `s ↦ W_{t_end - s, t_end}`.
    pub fn adjoint_reversal(&self, end: usize) -> Result<RoughPath> {
        let restricted = self.restricted(0, end)?;
        let mut out = restricted.reversed().negated();
        out.base_point = vec![0.0; self.dim];
        Ok(out)
    }

    /// Sub-path on `[t_start, t_end]`, re-based so that its grid starts at 0.
    pub fn restricted(&self, start: usize, end: usize) -> Result<RoughPath> {
        if start >= end || end > self.steps() {
            return Err(Error::InvalidGrid(format!(
                "cannot restrict to index range [{start}, {end}]"
            )));
        }
        let idx: Vec<usize> = (start..=end).collect();
        let grid = self.grid.subsample(&idx)?;
        let e = self.dim;
        let values = self.values();
        Ok(RoughPath {
            grid,
            dim: e,
            alpha: self.alpha,
            base_point: values[start * e..(start + 1) * e].to_vec(),
            first: self.first[start * e..end * e].to_vec(),
            second: self.second[start * e * e..end * e * e].to_vec(),
        })
    }

    /// Path on a sub-grid; steps are Chen-composed.
    pub fn subsampled(&self, indices: &[usize]) -> Result<RoughPath> {
        if indices.len() < 2 || indices[0] != 0 || *indices.last().unwrap() != self.steps() {
            return Err(Error::InvalidGrid(
                "subsample indices must start at 0 and end at the last grid index".into(),
            ));
        }
        let grid = self.grid.subsample(indices)?;
        let mut first = Vec::new();
        let mut second = Vec::new();
        for w in indices.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidGrid("subsample indices must increase".into()));
            }
            let inc = self.increment(w[0], w[1]);
            first.extend(inc.first);
            second.extend(inc.second);
        }
        Ok(RoughPath {
            grid,
            dim: self.dim,
            alpha: self.alpha,
            base_point: self.base_point.clone(),
            first,
            second,
        })
    }

    pub fn coarsened(&self, factor: usize) -> RoughPath {
        self.subsampled(&self.grid.coarse_indices(factor))
            .expect("coarse indices are valid")
    }

    /// Piecewise-linear interpolation of the first level through the dyadic
    /// points `round(k·N/2^level)`, lifted canonically on the same grid.
    pub fn piecewise_linear_approximation(&self, level: u32) -> RoughPath {
        let n = self.steps();
        let pieces = (1usize << level).min(n);
        let knots: Vec<usize> = (0..=pieces)
            .map(|k| ((k as f64) * n as f64 / pieces as f64).round() as usize)
            .collect();
        let values = self.values();
        let e = self.dim;
        let t = self.grid.times();
        let mut first = Vec::with_capacity(n * e);
        let mut second = Vec::with_capacity(n * e * e);
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let span = t[b] - t[a];
            for k in a..b {
                let frac = (t[k + 1] - t[k]) / span;
                let delta: Vec<f64> = (0..e)
                    .map(|i| (values[b * e + i] - values[a * e + i]) * frac)
                    .collect();
                let inc = Increment::linear(&delta);
                first.extend(inc.first);
                second.extend(inc.second);
            }
        }
        RoughPath {
            grid: self.grid.clone(),
            dim: e,
            alpha: self.alpha,
            base_point: self.base_point.clone(),
            first,
            second,
        }
    }

    /// CSV with columns `t, W_1..W_e, 𝕎_11..𝕎_ee`; the area columns on row
    /// `k >= 1` hold the step `[t_{k-1}, t_k]`, row 0 carries zeros.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let e = self.dim;
        let mut header = vec!["t".to_string()];
        header.extend((1..=e).map(|i| format!("W_{i}")));
        for i in 1..=e {
            for j in 1..=e {
                header.push(format!("WW_{i}{j}"));
            }
        }
        w.write_record(&header)?;
        let values = self.values();
        for k in 0..self.grid.len() {
            let mut row = vec![self.grid.time(k).to_string()];
            row.extend(values[k * e..(k + 1) * e].iter().map(|v| v.to_string()));
            if k == 0 {
                row.extend(std::iter::repeat_n("0".to_string(), e * e));
            } else {
                row.extend(self.step_second(k - 1).iter().map(|v| v.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, alpha: f64) -> Result<RoughPath> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let cols = headers.len();
        // 1 + e + e² columns
        let e = (1..=cols)
            .find(|e| 1 + e + e * e == cols)
            .ok_or_else(|| Error::InvalidGrid(format!("unexpected column count {cols}")))?;
        let mut times = Vec::new();
        let mut values: Vec<Vec<f64>> = Vec::new();
        let mut areas: Vec<Vec<f64>> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let nums = rec
                .iter()
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|err| Error::Parse {
                        pos: 0,
                        msg: format!("bad number `{s}`: {err}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            times.push(nums[0]);
            values.push(nums[1..1 + e].to_vec());
            areas.push(nums[1 + e..].to_vec());
        }
        let grid = Grid::new(times)?;
        let mut first = Vec::new();
        let mut second = Vec::new();
        for k in 1..values.len() {
            first.extend((0..e).map(|i| values[k][i] - values[k - 1][i]));
            second.extend_from_slice(&areas[k]);
        }
        RoughPath::from_steps(grid, alpha, values[0].clone(), first, second)
    }
}

/// Metadata written next to a path CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathManifest {
    pub kind: String,
    pub dim: usize,
    pub alpha: f64,
    pub grid: Grid,
    pub seed: Option<u64>,
    pub refinement: Option<usize>,
}

impl PathManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path)?;
        f.write_all(serde_json::to_string_pretty(self)?.as_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<PathManifest> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

/// A [`RoughPath`] known to satisfy `Sym(𝕎) = ½ W⊗W` on every step.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometricRoughPath(RoughPath);

impl Deref for GeometricRoughPath {
    type Target = RoughPath;
    fn deref(&self) -> &RoughPath {
        &self.0
    }
}

impl AsRef<RoughPath> for GeometricRoughPath {
    fn as_ref(&self) -> &RoughPath {
        &self.0
    }
}

impl GeometricRoughPath {
    /// Accepts `path` if its geometricity defect is below `1e-12` relative
    /// to the size of its first-level steps.
    pub fn try_new(path: RoughPath) -> Result<GeometricRoughPath> {
        for k in 0..path.steps() {
            let inc = path.step(k);
            let scale = 1.0f64.max(inc.first_norm().powi(2));
            let defect = inc.geometricity_defect();
            if defect > 1e-12 * scale {
                return Err(Error::InvalidGrid(format!(
                    "step {k} is not geometric (defect {defect:.3e})"
                )));
            }
        }
        Ok(GeometricRoughPath(path))
    }

    pub fn into_inner(self) -> RoughPath {
        self.0
    }

    pub fn reversed(&self) -> GeometricRoughPath {
        GeometricRoughPath(self.0.reversed())
    }

    pub fn restricted(&self, start: usize, end: usize) -> Result<GeometricRoughPath> {
        Ok(GeometricRoughPath(self.0.restricted(start, end)?))
    }

    pub fn coarsened(&self, factor: usize) -> GeometricRoughPath {
        GeometricRoughPath(self.0.coarsened(factor))
    }

    pub fn adjoint_reversal(&self, end: usize) -> Result<GeometricRoughPath> {
        Ok(GeometricRoughPath(self.0.adjoint_reversal(end)?))
    }

    pub fn piecewise_linear_approximation(&self, level: u32) -> GeometricRoughPath {
        GeometricRoughPath(self.0.piecewise_linear_approximation(level))
    }
}

/// Canonical lift of the piecewise-linear interpolation of `samples`
/// (one `e`-vector per grid point).
pub fn lift_piecewise_linear(
    grid: &Grid,
    samples: &[Vec<f64>],
    alpha: f64,
) -> Result<GeometricRoughPath> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples(samples.len()));
    }
    ensure_dim(grid.len(), samples.len())?;
    let e = samples[0].len();
    let mut first = Vec::with_capacity(grid.steps() * e);
    let mut second = Vec::with_capacity(grid.steps() * e * e);
    for w in samples.windows(2) {
        ensure_dim(e, w[1].len())?;
        let delta: Vec<f64> = (0..e).map(|i| w[1][i] - w[0][i]).collect();
        let inc = Increment::linear(&delta);
        first.extend(inc.first);
        second.extend(inc.second);
    }
    let path = RoughPath::from_steps(grid.clone(), alpha, samples[0].clone(), first, second)?;
    Ok(GeometricRoughPath(path))
}

/// Stratonovich lift of an `dim`-dimensional Brownian motion.
///
/// Each grid step is split into `refinement` sub-steps; the antisymmetric
/// part of the left-point iterated sum is kept as Lévy area and the
/// symmetric part is replaced by `½ W⊗W`, so the output is exactly
/// geometric. Normals are consumed sub-step by sub-step, component-major
/// within a sub-step.
pub fn brownian_lift<S: NormalSource + ?Sized>(
    source: &mut S,
    grid: &Grid,
    dim: usize,
    alpha: f64,
    refinement: usize,
) -> Result<GeometricRoughPath> {
    let r = refinement.max(1);
    let e = dim;
    let mut first = vec![0.0; grid.steps() * e];
    let mut second = vec![0.0; grid.steps() * e * e];
    let mut running = vec![0.0; e];
    let mut delta = vec![0.0; e];
    let mut left = vec![0.0; e * e];
    for k in 0..grid.steps() {
        let scale = (grid.dt(k) / r as f64).sqrt();
        running.iter_mut().for_each(|x| *x = 0.0);
        left.iter_mut().for_each(|x| *x = 0.0);
        for _ in 0..r {
            for d in delta.iter_mut() {
                *d = scale * source.next_normal();
            }
            for i in 0..e {
                for j in 0..e {
                    left[i * e + j] += running[i] * delta[j];
                }
            }
            for i in 0..e {
                running[i] += delta[i];
            }
        }
        let w = &running;
        first[k * e..(k + 1) * e].copy_from_slice(w);
        let s = &mut second[k * e * e..(k + 1) * e * e];
        for i in 0..e {
            for j in 0..e {
                let anti = 0.5 * (left[i * e + j] - left[j * e + i]);
                s[i * e + j] = 0.5 * w[i] * w[j] + anti;
            }
        }
    }
    let path = RoughPath::from_steps(grid.clone(), alpha, vec![0.0; e], first, second)?;
    Ok(GeometricRoughPath(path))
}

/// Two-dimensional pure-area path: `W ≡ 0`, `𝕎_{s,t} = rate·(t-s)·[[0,1],[-1,0]]`.
pub fn pure_area(grid: &Grid, rate: f64, alpha: f64) -> Result<GeometricRoughPath> {
    let n = grid.steps();
    let mut second = Vec::with_capacity(4 * n);
    for k in 0..n {
        let a = rate * grid.dt(k);
        second.extend_from_slice(&[0.0, a, -a, 0.0]);
    }
    let path = RoughPath::from_steps(grid.clone(), alpha, vec![0.0; 2], vec![0.0; 2 * n], second)?;
    Ok(GeometricRoughPath(path))
}

/// Grid estimates of `‖W‖_α` and `‖𝕎‖_{2α}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderNorm {
    pub first_level: f64,
    pub second_level: f64,
}

impl HolderNorm {
    /// Homogeneous size `‖W‖_α + ‖𝕎‖_{2α}^{1/2}`.
    pub fn homogeneous(&self) -> f64 {
        self.first_level + self.second_level.sqrt()
    }
}

/// Hölder quotients over all grid pairs with lag at most `max_lag` steps
/// (`None` = all pairs). This is a lower bound for the continuum norm.
pub fn holder_norm(path: &RoughPath, max_lag: Option<usize>) -> HolderNorm {
    let n = path.steps();
    let lag = max_lag.unwrap_or(n).max(1);
    let t = path.grid().times();
    let alpha = path.alpha();
    let mut first_level: f64 = 0.0;
    let mut second_level: f64 = 0.0;
    let mut inc = Increment::zero(path.dim());
    for i in 0..n {
        inc.first.iter_mut().for_each(|x| *x = 0.0);
        inc.second.iter_mut().for_each(|x| *x = 0.0);
        for j in (i + 1)..=(i + lag).min(n) {
            inc.extend(path.step_first(j - 1), path.step_second(j - 1));
            let h = t[j] - t[i];
            first_level = first_level.max(inc.first_norm() / h.powf(alpha));
            second_level = second_level.max(inc.second_norm() / h.powf(2.0 * alpha));
        }
    }
    HolderNorm {
        first_level,
        second_level,
    }
}

/// Greedy stopping times of a control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub a: f64,
    pub interval: (f64, f64),
    pub taus: Vec<f64>,
    pub tau_indices: Vec<usize>,
    pub count: usize,
}

/// Greedy count `N_{a;[s,t]}(ω)` for a control sampled on grid pairs.
///
/// `omega(i, j)` is the control between grid indices `i <= j`. The infimum
/// defining each stopping time is taken over grid points:
/// `τ_{n+1} = min{u > τ_n on the grid : ω(τ_n, u) >= a} ∧ t`.
pub fn greedy_count<F>(grid: &Grid, omega: F, a: f64, start: usize, end: usize) -> Result<ControlRecord>
where
    F: Fn(usize, usize) -> f64,
{
    if !(a > 0.0) {
        return Err(Error::InvalidGrid(format!("threshold a must be positive, got {a}")));
    }
    if start >= end || end > grid.steps() {
        return Err(Error::InvalidGrid(format!("bad interval [{start}, {end}]")));
    }
    let mut tau_indices = vec![start];
    let mut current = start;
    while current < end {
        let next = ((current + 1)..=end)
            .find(|&u| omega(current, u) >= a)
            .unwrap_or(end);
        tau_indices.push(next);
        current = next;
    }
    let count = tau_indices.iter().filter(|&&i| i < end).count() - 1;
    Ok(ControlRecord {
        a,
        interval: (grid.time(start), grid.time(end)),
        taus: tau_indices.iter().map(|&i| grid.time(i)).collect(),
        tau_indices,
        count,
    })
}

/// Like [`greedy_count`], but first verifies superadditivity on all grid
/// triples of the interval (cubic cost).
pub fn greedy_count_checked<F>(
    grid: &Grid,
    omega: F,
    a: f64,
    start: usize,
    end: usize,
) -> Result<ControlRecord>
where
    F: Fn(usize, usize) -> f64,
{
    check_superadditive(grid, &omega, start, end)?;
    greedy_count(grid, omega, a, start, end)
}

pub fn check_superadditive<F>(grid: &Grid, omega: &F, start: usize, end: usize) -> Result<()>
where
    F: Fn(usize, usize) -> f64,
{
    for s in start..=end {
        for u in s..=end {
            let whole = omega(s, u);
            for t in s..=u {
                let parts = omega(s, t) + omega(t, u);
                if whole < parts - 1e-12 * parts.abs().max(1.0) {
                    return Err(Error::NotSuperadditive {
                        s: grid.time(s),
                        t: grid.time(t),
                        u: grid.time(u),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Hölder-dominated control `ω(s,t) = (‖W‖_α + ‖𝕎‖_{2α}^{1/2})^{1/α}·(t-s)`.
pub fn holder_control(path: &RoughPath) -> impl Fn(usize, usize) -> f64 + '_ {
    let norm = holder_norm(path, None).homogeneous();
    let scale = norm.powf(1.0 / path.alpha());
    move |i, j| scale * (path.grid().time(j) - path.grid().time(i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Stream, ZeroSource};
    use proptest::prelude::*;

    fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
        let scale = a.iter().chain(b).map(|x| x.abs()).fold(1.0, f64::max);
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
    }

    #[test]
    fn chen_scalar_example() {
        let l = Increment::new(vec![1.0], vec![0.5]).unwrap();
        let r = Increment::new(vec![2.0], vec![2.0]).unwrap();
        let c = chen_compose(&l, &r).unwrap();
        assert_eq!(c.first, vec![3.0]);
        assert_eq!(c.second, vec![4.5]);
    }

    #[test]
    fn chen_identity_and_pure_areas() {
        let x = Increment::new(vec![0.3, -1.2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(chen_compose(&Increment::zero(2), &x).unwrap(), x);
        let a = Increment::new(vec![0.0, 0.0], vec![0.0, 1.5, -1.5, 0.0]).unwrap();
        let b = Increment::new(vec![0.0, 0.0], vec![0.0, -0.25, 0.25, 0.0]).unwrap();
        let c = chen_compose(&a, &b).unwrap();
        assert_eq!(c.second, vec![0.0, 1.25, -1.25, 0.0]);
    }

    #[test]
    fn chen_dimension_mismatch() {
        assert!(chen_compose(&Increment::zero(1), &Increment::zero(2)).is_err());
    }

    #[test]
    fn linear_lift_examples() {
        let grid = Grid::uniform(1.0, 1).unwrap();
        let p = lift_piecewise_linear(&grid, &[vec![0.0], vec![1.0]], 0.5).unwrap();
        assert_eq!(p.step_first(0), &[1.0]);
        assert_eq!(p.step_second(0), &[0.5]);

        let grid = Grid::uniform(1.0, 8).unwrap();
        let flat = vec![vec![2.0, -1.0]; 9];
        let p = lift_piecewise_linear(&grid, &flat, 0.4).unwrap();
        assert!(p.increment(0, 8).first.iter().all(|&x| x == 0.0));
        assert!(p.increment(0, 8).second.iter().all(|&x| x == 0.0));
        assert!(lift_piecewise_linear(&grid, &flat[..1], 0.4).is_err());
    }

    #[test]
    fn parabola_area_matches_riemann_oracle() {
        // W_t = (t, t²) on a dyadic grid; oracle: fine left-point Riemann sum
        // of ∫ (W - W_0) ⊗ dW on an independent, much finer grid.
        let n = 64;
        let grid = Grid::uniform(1.0, n).unwrap();
        let samples: Vec<Vec<f64>> = grid.times().iter().map(|&t| vec![t, t * t]).collect();
        let p = lift_piecewise_linear(&grid, &samples, 0.5).unwrap();
        let area = p.increment(0, n).second;
        let anti = 0.5 * (area[1] - area[2]);

        let m = 200_000;
        let mut oracle = [0.0; 4];
        for k in 0..m {
            let (s, t) = (k as f64 / m as f64, (k + 1) as f64 / m as f64);
            let w = [s, s * s];
            let dw = [t - s, t * t - s * s];
            for i in 0..2 {
                for j in 0..2 {
                    oracle[i * 2 + j] += w[i] * dw[j];
                }
            }
        }
        let oracle_anti = 0.5 * (oracle[1] - oracle[2]);
        // ½(∫ t d(t²) - ∫ t² dt) = ½(2/3 - 1/3)
        assert!((oracle_anti - 1.0 / 6.0).abs() < 1e-5);
        // piecewise-linear lift converges at O(h²)
        assert!((anti - oracle_anti).abs() < 1e-4, "{anti} vs {oracle_anti}");
    }

    #[test]
    fn brownian_lift_zero_stub() {
        let grid = Grid::uniform(1.0, 10).unwrap();
        let p = brownian_lift(&mut ZeroSource, &grid, 3, 0.45, 16).unwrap();
        assert!(p.increment(0, 10).first.iter().all(|&x| x == 0.0));
        assert!(p.increment(0, 10).second.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn brownian_lift_is_geometric() {
        let grid = Grid::uniform(1.0, 50).unwrap();
        for seed in 0..5 {
            let p = brownian_lift(&mut Stream::new(seed, 0), &grid, 3, 0.45, 16).unwrap();
            assert!(p.geometricity_defect() <= 1e-15);
            for k in 0..p.steps() {
                let s = p.step_second(k);
                for i in 0..3 {
                    assert_eq!(s[i * 3 + i], 0.5 * p.step_first(k)[i].powi(2));
                }
            }
        }
    }

    #[test]
    fn holder_norm_examples() {
        let grid = Grid::uniform(1.0, 64).unwrap();
        let zero = lift_piecewise_linear(&grid, &vec![vec![0.0]; 65], 0.5).unwrap();
        let h = holder_norm(&zero, None);
        assert_eq!((h.first_level, h.second_level), (0.0, 0.0));

        let samples: Vec<Vec<f64>> = grid.times().iter().map(|&t| vec![t]).collect();
        let p = lift_piecewise_linear(&grid, &samples, 0.5).unwrap();
        let h = holder_norm(&p, None);
        assert!((h.first_level - 1.0).abs() < 1e-12);
        assert!((h.second_level - 0.5).abs() < 1e-12);
    }

    #[test]
    fn greedy_hand_cases() {
        let grid = Grid::uniform(1.0, 10).unwrap();
        let t = grid.times().to_vec();
        let omega = |i: usize, j: usize| t[j] - t[i];
        let rec = greedy_count_checked(&grid, omega, 0.3, 0, 10).unwrap();
        assert_eq!(rec.count, 3);
        assert_eq!(rec.taus, vec![0.0, 0.3, 0.6, 0.9, 1.0]);

        let rec = greedy_count(&grid, |_, _| 0.0, 0.3, 0, 10).unwrap();
        assert_eq!(rec.count, 0);
        let rec = greedy_count(&grid, omega, 1.0, 0, 10).unwrap();
        assert_eq!(rec.count, 0);
        assert!(greedy_count(&grid, omega, 0.0, 0, 10).is_err());
    }

    #[test]
    fn non_superadditive_is_reported() {
        let grid = Grid::uniform(1.0, 10).unwrap();
        let t = grid.times().to_vec();
        let omega = |i: usize, j: usize| (t[j] - t[i]).sqrt();
        assert!(matches!(
            greedy_count_checked(&grid, omega, 0.3, 0, 10),
            Err(Error::NotSuperadditive { .. })
        ));
    }

    #[test]
    fn reversal_is_involution() {
        let grid = Grid::uniform(2.0, 20).unwrap();
        let p = brownian_lift(&mut Stream::new(3, 1), &grid, 2, 0.45, 4).unwrap();
        let rr = p.reversed().reversed();
        assert!(rel_close(&rr.values(), &p.values(), 1e-12));
        for k in 0..p.steps() {
            assert!(rel_close(rr.step_second(k), p.step_second(k), 1e-12));
        }
        let r = p.reversed();
        // reversed steps of a geometric path are (-W, 𝕎ᵀ)
        let s = p.step_second(19);
        let rs = r.step_second(0);
        assert!(rel_close(rs, &[s[0], s[2], s[1], s[3]], 1e-12));
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::uniform(1.0, 16).unwrap();
        let p = brownian_lift(&mut Stream::new(9, 0), &grid, 2, 0.4, 8).unwrap();
        let file = dir.path().join("w.csv");
        p.write_csv(&file).unwrap();
        let q = RoughPath::read_csv(&file, 0.4).unwrap();
        assert_eq!(q.dim(), 2);
        assert!(rel_close(&q.values(), &p.values(), 1e-14));
        for k in 0..16 {
            assert_eq!(q.step_second(k), p.step_second(k));
        }
        let m = PathManifest {
            kind: "brownian".into(),
            dim: 2,
            alpha: 0.4,
            grid: grid.clone(),
            seed: Some(9),
            refinement: Some(8),
        };
        let mf = dir.path().join("w.json");
        m.write(&mf).unwrap();
        assert_eq!(PathManifest::read(&mf).unwrap(), m);
    }

    #[test]
    fn invalid_grids() {
        assert!(Grid::new(vec![0.0]).is_err());
        assert!(Grid::new(vec![0.1, 1.0]).is_err());
        assert!(Grid::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(Grid::uniform(1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn chen_is_associative(
            a in proptest::collection::vec(-2.0f64..2.0, 6),
            b in proptest::collection::vec(-2.0f64..2.0, 6),
            c in proptest::collection::vec(-2.0f64..2.0, 6),
        ) {
            let inc = |v: &[f64]| Increment::new(v[..2].to_vec(), v[2..].to_vec()).unwrap();
            let (x, y, z) = (inc(&a), inc(&b), inc(&c));
            let left = chen_compose(&chen_compose(&x, &y).unwrap(), &z).unwrap();
            let right = chen_compose(&x, &chen_compose(&y, &z).unwrap()).unwrap();
            prop_assert!(rel_close(&left.first, &right.first, 1e-12));
            prop_assert!(rel_close(&left.second, &right.second, 1e-12));
        }

        #[test]
        fn greedy_count_monotone_in_threshold(
            incs in proptest::collection::vec(0.0f64..1.0, 20),
            a in 0.05f64..2.0,
        ) {
            let grid = Grid::uniform(1.0, 20).unwrap();
            let mut cum = vec![0.0];
            for x in &incs { cum.push(cum.last().unwrap() + x); }
            let omega = |i: usize, j: usize| cum[j] - cum[i];
            let n1 = greedy_count(&grid, omega, a, 0, 20).unwrap().count;
            let n2 = greedy_count(&grid, omega, 1.5 * a, 0, 20).unwrap().count;
            prop_assert!(n2 <= n1);
            let left = greedy_count(&grid, omega, a, 0, 10).unwrap().count;
            let right = greedy_count(&grid, omega, a, 10, 20).unwrap().count;
            prop_assert!(n1 + 1 >= left + right);
        }
    }
}
