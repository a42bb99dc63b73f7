use std::hash::{Hash, Hasher};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::coefficients::{CoefficientSmoothness, CompiledCoefficients, OperatorCoefficients};
use super::estimate::{map_chunks, pairwise_merge, Estimate, LogAccumulator, McParams};
use crate::controlled::ControlledPath;
use crate::error::{ensure_dim, Error, Result};
use crate::expr::{Compiled, Expr};
use crate::rde::{build_joint_lift, davie_advance, DavieWorkspace, JointLift, StatePath, VectorFields};
use crate::rng::StreamFamily;
use crate::roughpath::RoughPath;

/// Tensor grid on a box in `R^d`; axis nodes are sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    axes: Vec<Vec<f64>>,
}

impl SpaceGrid {
    /// `n` equispaced nodes per axis on `[-half_width, half_width]^dim`.
    pub fn uniform(dim: usize, half_width: f64, n: usize) -> Result<SpaceGrid> {
        if n < 2 || half_width.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::InvalidGrid(format!(
                "need n >= 2 and positive half width, got n = {n}, L = {half_width}"
            )));
        }
        let axis: Vec<f64> = (0..n)
            .map(|j| -half_width + 2.0 * half_width * j as f64 / (n - 1) as f64)
            .collect();
        SpaceGrid::from_axes(vec![axis; dim])
    }

    pub fn from_axes(axes: Vec<Vec<f64>>) -> Result<SpaceGrid> {
        if axes.is_empty() || axes.iter().any(|a| a.is_empty()) {
            return Err(Error::InvalidGrid("empty space grid".into()));
        }
        for a in &axes {
            if a.windows(2).any(|w| !(w[1] > w[0])) || a.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidGrid("axis nodes must be finite and increasing".into()));
            }
        }
        Ok(SpaceGrid { axes })
    }

    /// A single point.
    pub fn point(x: &[f64]) -> Result<SpaceGrid> {
        SpaceGrid::from_axes(x.iter().map(|v| vec![*v]).collect())
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point with flat index `p`; the last axis varies fastest.
    pub fn point_at(&self, mut p: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for (i, a) in self.axes.iter().enumerate().rev() {
            x[i] = a[p % a.len()];
            p /= a.len();
        }
        x
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|p| self.point_at(p)).collect()
    }

    /// Largest node spacing.
    pub fn mesh(&self) -> f64 {
        self.axes
            .iter()
            .flat_map(|a| a.windows(2).map(|w| w[1] - w[0]))
            .fold(0.0, f64::max)
    }

    /// Trapezoid weights of the tensor grid.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let axis_w: Vec<Vec<f64>> = self
            .axes
            .iter()
            .map(|a| {
                let n = a.len();
                (0..n)
                    .map(|j| {
                        let left = if j > 0 { a[j] - a[j - 1] } else { 0.0 };
                        let right = if j + 1 < n { a[j + 1] - a[j] } else { 0.0 };
                        0.5 * (left + right)
                    })
                    .collect()
            })
            .collect();
        (0..self.len())
            .map(|mut p| {
                let mut w = 1.0;
                for a in axis_w.iter().rev() {
                    w *= a[p % a.len()];
                    p /= a.len();
                }
                w
            })
            .collect()
    }

    /// Whether `x` lies in the bounding box.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.axes
            .iter()
            .zip(x)
            .all(|(a, v)| *v >= a[0] && *v <= a[a.len() - 1])
    }

    /// Cubic (Lagrange on the 4 nearest nodes, fewer if the axis is short)
    /// tensor interpolation of `values` at `x`. Points outside the box are
    /// clamped to it.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let stencils: Vec<(usize, Vec<f64>)> = self
            .axes
            .iter()
            .zip(x)
            .map(|(a, &v)| lagrange_stencil(a, v))
            .collect();
        let mut total = 0.0;
        let sizes: Vec<usize> = stencils.iter().map(|s| s.1.len()).collect();
        let count: usize = sizes.iter().product();
        for q in 0..count {
            let mut rem = q;
            let mut w = 1.0;
            let mut flat = 0usize;
            for (axis, (start, weights)) in stencils.iter().enumerate() {
                let stride: usize = self.axes[axis + 1..].iter().map(|a| a.len()).product();
                let inner: usize = sizes[axis + 1..].iter().product();
                let j = rem / inner;
                rem %= inner;
                w *= weights[j];
                flat += (start + j) * stride;
            }
            total += w * values[flat];
        }
        total
    }
}

fn lagrange_stencil(a: &[f64], v: f64) -> (usize, Vec<f64>) {
    let n = a.len();
    let v = v.clamp(a[0], a[n - 1]);
    if n == 1 {
        return (0, vec![1.0]);
    }
    let width = n.min(4);
    let i = a.partition_point(|&u| u <= v).clamp(1, n - 1) - 1;
    let start = (i + 1).saturating_sub(width / 2).min(n - width);
    let nodes = &a[start..start + width];
    let weights = (0..width)
        .map(|j| {
            let mut w = 1.0;
            for (k, &xk) in nodes.iter().enumerate() {
                if k != j {
                    w *= (v - xk) / (nodes[j] - xk);
                }
            }
            w
        })
        .collect();
    (start, weights)
}

/// Where a field came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub particles: usize,
    pub seed: u64,
    pub subgrid: usize,
    pub driver_id: String,
}

/// Fingerprint of a driver's data.
pub fn driver_id(driver: &RoughPath) -> String {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    driver.dim().hash(&mut h);
    for t in driver.grid().times() {
        t.to_bits().hash(&mut h);
    }
    for k in 0..driver.steps() {
        for v in driver.step_first(k).iter().chain(driver.step_second(k)) {
            v.to_bits().hash(&mut h);
        }
    }
    format!("{:016x}", h.finish())
}

/// `u(t, x)` on a time × space product grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackwardField {
    pub time_indices: Vec<usize>,
    pub times: Vec<f64>,
    pub space: SpaceGrid,
    /// `values[r][p]`: record time `r`, space point `p`.
    pub values: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
    pub datum: String,
    pub provenance: Provenance,
}

impl BackwardField {
    /// Field sampled from a closed form `f(t, x)` at the given grid records.
    pub fn tabulate<F: Fn(f64, &[f64]) -> f64>(
        time_indices: Vec<usize>,
        times: Vec<f64>,
        space: SpaceGrid,
        datum: &str,
        f: F,
    ) -> Result<BackwardField> {
        ensure_dim(time_indices.len(), times.len())?;
        let points = space.points();
        let values: Vec<Vec<f64>> = times.iter().map(|&t| points.iter().map(|x| f(t, x)).collect()).collect();
        let std_errors = vec![vec![0.0; points.len()]; times.len()];
        Ok(BackwardField {
            time_indices,
            times,
            space,
            values,
            std_errors,
            datum: datum.to_string(),
            provenance: Provenance {
                particles: 0,
                seed: 0,
                subgrid: 0,
                driver_id: "closed-form".into(),
            },
        })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r]
    }

    /// Record index of grid index `k`.
    pub fn record_of(&self, k: usize) -> Option<usize> {
        self.time_indices.iter().position(|&i| i == k)
    }

    pub fn interpolate(&self, r: usize, x: &[f64]) -> f64 {
        self.space.interpolate(&self.values[r], x)
    }

    /// Interpolated standard error (linear weights are not needed here;
    /// the same stencil is used and the result taken in absolute value).
    pub fn interpolate_std_error(&self, r: usize, x: &[f64]) -> f64 {
        self.space.interpolate(&self.std_errors[r], x).abs()
    }

    pub fn max_std_error(&self) -> f64 {
        self.std_errors.iter().flatten().fold(0.0, |a, b| a.max(*b))
    }

    /// Sup-norm distance to another field on the same grids.
    pub fn sup_distance(&self, other: &BackwardField) -> Result<f64> {
        ensure_dim(self.values.len(), other.values.len())?;
        ensure_dim(self.space.len(), other.space.len())?;
        Ok(self
            .values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// CSV with columns `t, x_1.., u, std_error`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.space.dim()).map(|i| format!("x_{i}")));
        header.push("u".into());
        header.push("std_error".into());
        w.write_record(&header)?;
        let points = self.space.points();
        for (r, t) in self.times.iter().enumerate() {
            for (p, x) in points.iter().enumerate() {
                let mut row = vec![t.to_string()];
                row.extend(x.iter().map(|v| v.to_string()));
                row.push(self.values[r][p].to_string());
                row.push(self.std_errors[r][p].to_string());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-particle driving path: the joint lift when there is Brownian noise,
/// otherwise `W` itself.
pub(crate) struct ParticleDriver<'a> {
    w: &'a RoughPath,
    lift: Option<JointLift>,
    family: StreamFamily,
    m: usize,
    subgrid: usize,
}

impl<'a> ParticleDriver<'a> {
    pub fn new(w: &'a RoughPath, m: usize, family: StreamFamily, subgrid: usize) -> Self {
        ParticleDriver {
            w,
            lift: None,
            family,
            m,
            subgrid,
        }
    }

    pub fn load(&mut self, particle: usize) -> Result<&RoughPath> {
        if self.m == 0 {
            return Ok(self.w);
        }
        let mut stream = self.family.stream(particle as u64);
        match &mut self.lift {
            Some(l) => l.refill(self.w, &mut stream),
            None => self.lift = Some(build_joint_lift(self.w, &mut stream, self.m, self.subgrid)?),
        }
        Ok(self.lift.as_ref().map(|l| l.path()).unwrap_or(self.w))
    }
}

/// Running log-weight `∫c dr + ∫γ(X) d𝐖` split into its two parts so that
/// a constant `c` contributes exactly `c·(t - t_0)`.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct LogWeight {
    rough: f64,
    time: f64,
}

impl LogWeight {
    pub fn total(&self, cc: &CompiledCoefficients, t0: f64, t: f64) -> f64 {
        match cc.c_is_const() {
            Some(v) => self.rough + v * (t - t0),
            None => self.rough + self.time,
        }
    }
}

/// Scratch for [`propagate`].
pub(crate) struct Propagator {
    ws: DavieWorkspace,
    scratch: Vec<f64>,
}

impl Propagator {
    pub fn new(cc: &CompiledCoefficients) -> Self {
        Propagator {
            ws: DavieWorkspace::for_fields(cc),
            scratch: vec![0.0; cc.rough_dim() * cc.state_dim()],
        }
    }

    /// Advance `x` and the log-weight over grid steps `start..end` of `z`,
    /// calling `observe(k, x, weight)` after reaching grid point `k`.
    pub fn run<O>(
        &mut self,
        cc: &CompiledCoefficients,
        z: &RoughPath,
        start: usize,
        end: usize,
        x: &mut [f64],
        lw: &mut LogWeight,
        mut observe: O,
    ) -> Result<()>
    where
        O: FnMut(usize, &[f64], &LogWeight),
    {
        let grid = z.grid();
        let unit = cc.unit_weights();
        let c_const = cc.c_is_const().is_some();
        for k in start..end {
            let (zf, zs) = (z.step_first(k), z.step_second(k));
            let dt = grid.dt(k);
            cc.fields(x, self.ws.fields_mut());
            if !unit {
                if !c_const {
                    lw.time += cc.c_integral(x, grid.time(k), grid.time(k + 1));
                }
                lw.rough += cc.gamma_increment(x, self.ws.last_fields(), zf, zs, &mut self.scratch);
            }
            davie_advance(cc, x, zf, zs, dt, &mut self.ws);
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    step: k,
                    time: grid.time(k + 1),
                });
            }
            observe(k + 1, x, lw);
        }
        Ok(())
    }
}

pub(crate) fn backward_smoothness() -> CoefficientSmoothness {
    CoefficientSmoothness {
        sigma: 3,
        b: 1,
        c: 1,
        beta: 3,
        gamma: 2,
    }
}

fn check_driver(cc: &CompiledCoefficients, driver: &RoughPath) -> Result<()> {
    ensure_dim(cc.rough_dim(), driver.dim())
}

/// Estimates of `E[g(X_T) e^{∫c + ∫γ d𝐖}]` started at grid index `starts[s]`
/// from `points[p]`, returned as `[s][p]`. One joint lift per particle is
/// shared by every `(start, point)` pair.
pub(crate) fn backward_estimates(
    cc: &CompiledCoefficients,
    g: &Compiled,
    driver: &RoughPath,
    mc: &McParams,
    starts: &[usize],
    points: &[Vec<f64>],
) -> Result<Vec<Vec<Estimate>>> {
    mc.validate()?;
    check_driver(cc, driver)?;
    let n = driver.steps();
    let d = cc.state_dim();
    for p in points {
        ensure_dim(d, p.len())?;
    }
    if let Some(&bad) = starts.iter().find(|&&s| s > n) {
        return Err(Error::InvalidGrid(format!("start index {bad} beyond {n} steps")));
    }
    let family = StreamFamily::new(mc.seed);
    let m = cc.brownian_dim();
    let particles = if m == 0 { 1 } else { mc.particles };
    let slots = starts.len() * points.len();
    let horizon = driver.grid().time(n);
    let chunks = map_chunks(particles, |range| {
        let mut pd = ParticleDriver::new(driver, m, family, mc.subgrid);
        let mut prop = Propagator::new(cc);
        let mut accs = vec![LogAccumulator::default(); slots];
        let mut x = vec![0.0; d];
        for i in range {
            let z = pd.load(i)?;
            for (si, &start) in starts.iter().enumerate() {
                let t0 = driver.grid().time(start);
                for (pi, p) in points.iter().enumerate() {
                    x.copy_from_slice(p);
                    let mut lw = LogWeight::default();
                    prop.run(cc, z, start, n, &mut x, &mut lw, |_, _, _| {})?;
                    accs[si * points.len() + pi].push(g.eval(&x, 0.0), lw.total(cc, t0, horizon));
                }
            }
        }
        Ok(accs)
    })?;
    let mut out = Vec::with_capacity(starts.len());
    for si in 0..starts.len() {
        let mut row = Vec::with_capacity(points.len());
        for pi in 0..points.len() {
            let slot: Vec<LogAccumulator> = chunks.iter().map(|c| c[si * points.len() + pi]).collect();
            row.push(pairwise_merge(&slot).finish(1.0)?);
        }
        out.push(row);
    }
    Ok(out)
}

/// Monte Carlo value of `u(t, x) = E^{t,x}[g(X_T) exp(∫_t^T c dr + ∫_t^T γ(X) d𝐖)]`
/// along `dX = σ dB + b dt + β d𝐖`.
pub fn backward_value(
    coeffs: &OperatorCoefficients,
    g: &Expr,
    t: f64,
    x: &[f64],
    driver: &RoughPath,
    mc: &McParams,
) -> Result<Estimate> {
    coeffs.check_smoothness(&backward_smoothness(), "backward_value");
    let cc = coeffs.compile_active()?;
    let k = driver.grid().index_of(t)?;
    let est = backward_estimates(&cc, &g.compile(), driver, mc, &[k], &[x.to_vec()])?;
    Ok(est[0][0])
}

/// `u` on `time_indices × space`; the terminal row is `g` itself.
pub fn backward_field(
    coeffs: &OperatorCoefficients,
    g: &Expr,
    driver: &RoughPath,
    time_indices: &[usize],
    space: &SpaceGrid,
    mc: &McParams,
) -> Result<BackwardField> {
    coeffs.check_smoothness(&backward_smoothness(), "backward_field");
    ensure_dim(coeffs.dim(), space.dim())?;
    let cc = coeffs.compile_active()?;
    let n = driver.steps();
    let gc = g.compile();
    let points = space.points();
    let interior: Vec<usize> = time_indices.iter().copied().filter(|&k| k != n).collect();
    let est = backward_estimates(&cc, &gc, driver, mc, &interior, &points)?;
    let mut values = Vec::with_capacity(time_indices.len());
    let mut std_errors = Vec::with_capacity(time_indices.len());
    let mut next = est.into_iter();
    for &k in time_indices {
        if k == n {
            values.push(points.iter().map(|x| gc.eval(x, 0.0)).collect());
            std_errors.push(vec![0.0; points.len()]);
        } else {
            let row = next.next().expect("one estimate row per interior time");
            values.push(row.iter().map(|e| e.mean).collect());
            std_errors.push(row.iter().map(|e| e.std_error).collect());
        }
    }
    Ok(BackwardField {
        time_indices: time_indices.to_vec(),
        times: time_indices.iter().map(|&k| driver.grid().time(k)).collect(),
        space: space.clone(),
        values,
        std_errors,
        datum: g.to_string(),
        provenance: Provenance {
            particles: if cc.brownian_dim() == 0 { 1 } else { mc.particles },
            seed: mc.seed,
            subgrid: mc.subgrid,
            driver_id: driver_id(driver),
        },
    })
}

/// `∫_0^T c(X) dr + ∫_0^T γ(X) d𝐖` along a solved trajectory, with `γ(X)`
/// integrated as the controlled path `(γ(X), Dγ(X)·(σ, β)(X))` against
/// the driving path `z` (the joint lift, or `W` when there is no noise).
pub fn log_weight(cc: &CompiledCoefficients, path: &StatePath, z: &RoughPath) -> Result<f64> {
    ensure_dim(cc.driver_dim(), z.dim())?;
    ensure_dim(cc.state_dim(), path.dim)?;
    ensure_dim(z.grid().len(), path.grid.len())?;
    let (d, m, e) = (cc.state_dim(), cc.brownian_dim(), cc.rough_dim());
    let n = m + e;
    let len = z.grid().len();
    let mut values = vec![0.0; len * n];
    let mut derivs = vec![0.0; len * n * n];
    let mut v = vec![0.0; n * d];
    let mut g = vec![0.0; e];
    let mut dg = vec![0.0; e * d];
    let mut time = 0.0;
    for k in 0..len {
        let x = path.state(k);
        cc.fields(x, &mut v);
        cc.gamma_at(x, &mut g);
        cc.gamma_gradient(x, &mut dg);
        for j in 0..e {
            values[k * n + m + j] = g[j];
            for a in 0..n {
                let dot: f64 = (0..d).map(|i| dg[j * d + i] * v[a * d + i]).sum();
                derivs[k * n * n + (m + j) * n + a] = dot;
            }
        }
        if k + 1 < len {
            time += cc.c_integral(x, z.grid().time(k), z.grid().time(k + 1));
        }
    }
    if let Some(c) = cc.c_is_const() {
        time = c * (z.grid().time(len - 1) - z.grid().time(0));
    }
    let y = ControlledPath::new(Arc::new(z.clone()), (1, n), values, derivs)?;
    let running = y.integral_path()?;
    Ok(time + running[len - 1])
}

/// `exp` of [`log_weight`], guarded against overflow.
pub fn exp_weight(cc: &CompiledCoefficients, path: &StatePath, z: &RoughPath) -> Result<f64> {
    let lw = log_weight(cc, path, z)?;
    let w = lw.exp();
    if !w.is_finite() {
        return Err(Error::WeightOverflow(lw));
    }
    Ok(w)
}
