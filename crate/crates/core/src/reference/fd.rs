use serde::{Deserialize, Serialize};

use super::driver::SmoothDriver;
use crate::error::{ensure_dim, Error, Result};
use crate::expr::Expr;
use crate::feynman_kac::{BackwardField, OperatorCoefficients, Provenance, SpaceGrid};

/// Boundary handling on the edge of the box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Homogeneous Dirichlet data.
    Zero,
    /// Quadratic extrapolation from the three nearest interior nodes.
    #[default]
    Extrapolate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdOptions {
    pub space: SpaceGrid,
    pub time_steps: usize,
    /// Times at which the solution is stored.
    pub record: Vec<f64>,
    #[serde(default)]
    pub boundary: Boundary,
}

/// Largest admissible `max|velocity|·Δt/h` for the explicit RK3 step with
/// centred differences, and the analogous bounds for the zero-order and
/// mixed-derivative terms.
const TRANSPORT_CFL: f64 = 1.5;
const REACTION_CFL: f64 = 1.5;
const CROSS_CFL: f64 = 0.4;

/// Coefficients sampled at the grid nodes.
struct Nodes {
    d: usize,
    e: usize,
    sizes: Vec<usize>,
    strides: Vec<usize>,
    h: Vec<f64>,
    half_a: Vec<Vec<f64>>,
    cross: Option<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<f64>,
    beta: Vec<Vec<Vec<f64>>>,
    gamma: Vec<Vec<f64>>,
    interior: Vec<bool>,
}

impl Nodes {
    fn new(coeffs: &OperatorCoefficients, space: &SpaceGrid) -> Result<Nodes> {
        let d = coeffs.dim();
        ensure_dim(d, space.dim())?;
        if d > 2 {
            return Err(Error::InvalidGrid(format!("finite differences support d <= 2, got {d}")));
        }
        let sizes: Vec<usize> = space.axes().iter().map(|a| a.len()).collect();
        if sizes.iter().any(|&n| n < 5) {
            return Err(Error::InvalidGrid("need at least 5 nodes per axis".into()));
        }
        let mut h = Vec::with_capacity(d);
        for a in space.axes() {
            let step = (a[a.len() - 1] - a[0]) / (a.len() - 1) as f64;
            if a.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step) {
                return Err(Error::InvalidGrid("finite differences need uniform axes".into()));
            }
            h.push(step);
        }
        let mut strides = vec![1; d];
        for i in (0..d.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * sizes[i + 1];
        }
        let points = space.points();
        let eval = |e: &Expr| -> Vec<f64> { points.iter().map(|x| e.eval(x, 0.0)).collect() };
        let a = coeffs.diffusion_matrix();
        let half_a = (0..d).map(|i| eval(&a[i][i]).iter().map(|v| 0.5 * v).collect()).collect();
        let cross = if d == 2 && !a[0][1].is_zero() { Some(eval(&a[0][1])) } else { None };
        let interior = (0..points.len())
            .map(|p| (0..d).all(|i| {
                let j = (p / strides[i]) % sizes[i];
                j > 0 && j + 1 < sizes[i]
            }))
            .collect();
        Ok(Nodes {
            d,
            e: coeffs.rough_dim(),
            sizes,
            strides,
            h,
            half_a,
            cross,
            b: coeffs.b().iter().map(eval).collect(),
            c: eval(coeffs.c()),
            beta: coeffs.beta().iter().map(|col| col.iter().map(eval).collect()).collect(),
            gamma: coeffs.gamma().iter().map(eval).collect(),
            interior,
        })
    }

    fn len(&self) -> usize {
        self.c.len()
    }

    /// Check the explicit part at step `dt` given `max|Ẇ^k|`.
    fn check_stability(&self, dt: f64, max_rate: &[f64]) -> Result<()> {
        let mut transport: f64 = 0.0;
        let mut reaction: f64 = 0.0;
        let mut cross: f64 = 0.0;
        for p in 0..self.len() {
            let mut t = 0.0;
            for i in 0..self.d {
                let mut v = self.b[i][p].abs();
                for k in 0..self.e {
                    v += self.beta[k][i][p].abs() * max_rate[k];
                }
                t += v / self.h[i];
            }
            transport = transport.max(t);
            let mut r = self.c[p].abs();
            for k in 0..self.e {
                r += self.gamma[k][p].abs() * max_rate[k];
            }
            reaction = reaction.max(r);
            if let Some(a) = &self.cross {
                cross = cross.max(a[p].abs() / (self.h[0] * self.h[1]));
            }
        }
        let mut limit = f64::INFINITY;
        if transport > 0.0 {
            limit = limit.min(TRANSPORT_CFL / transport);
        }
        if reaction > 0.0 {
            limit = limit.min(REACTION_CFL / reaction);
        }
        if cross > 0.0 {
            limit = limit.min(CROSS_CFL / cross);
        }
        if dt > limit {
            return Err(Error::Unstable {
                dt,
                suggested: 0.9 * limit,
            });
        }
        Ok(())
    }

    /// `out = (b + β_k r^k)·Dv + (c + γ_k r^k) v + a_{01} ∂_{01} v` at interior
    /// nodes, zero elsewhere.
    fn explicit(&self, v: &[f64], r: &[f64], out: &mut [f64]) {
        for p in 0..self.len() {
            if !self.interior[p] {
                out[p] = 0.0;
                continue;
            }
            let mut zero = self.c[p];
            for k in 0..self.e {
                zero += self.gamma[k][p] * r[k];
            }
            let mut acc = zero * v[p];
            for i in 0..self.d {
                let mut vel = self.b[i][p];
                for k in 0..self.e {
                    vel += self.beta[k][i][p] * r[k];
                }
                if vel != 0.0 {
                    let s = self.strides[i];
                    acc += vel * (v[p + s] - v[p - s]) / (2.0 * self.h[i]);
                }
            }
            if let Some(a) = &self.cross {
                let (s0, s1) = (self.strides[0], self.strides[1]);
                let mixed = (v[p + s0 + s1] - v[p + s0 - s1] - v[p - s0 + s1] + v[p - s0 - s1])
                    / (4.0 * self.h[0] * self.h[1]);
                acc += a[p] * mixed;
            }
            out[p] = acc;
        }
    }

    fn apply_boundary(&self, v: &mut [f64], boundary: Boundary) {
        match boundary {
            Boundary::Zero => {
                for p in 0..self.len() {
                    if !self.interior[p] {
                        v[p] = 0.0;
                    }
                }
            }
            Boundary::Extrapolate => {
                for i in 0..self.d {
                    let s = self.strides[i];
                    let n = self.sizes[i];
                    for p in 0..self.len() {
                        if (p / s) % n != 0 {
                            continue;
                        }
                        // p is the first node of a line along axis i
                        v[p] = 3.0 * v[p + s] - 3.0 * v[p + 2 * s] + v[p + 3 * s];
                        let q = p + (n - 1) * s;
                        v[q] = 3.0 * v[q - s] - 3.0 * v[q - 2 * s] + v[q - 3 * s];
                    }
                }
            }
        }
    }

    /// Crank–Nicolson step of `∂_τ v = ½a_ii ∂_ii v` along axis `i`.
    fn diffuse(&self, v: &mut [f64], i: usize, dt: f64, boundary: Boundary) {
        let s = self.strides[i];
        let n = self.sizes[i];
        let scale = 0.5 * dt / (self.h[i] * self.h[i]);
        if self.half_a[i].iter().all(|a| *a == 0.0) {
            return;
        }
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for p in 0..self.len() {
            if (p / s) % n != 0 {
                continue;
            }
            for j in 0..n {
                let q = p + j * s;
                if j == 0 || j + 1 == n {
                    lower[j] = 0.0;
                    upper[j] = 0.0;
                    diag[j] = 1.0;
                    rhs[j] = v[q];
                } else {
                    let al = scale * self.half_a[i][q];
                    lower[j] = -al;
                    upper[j] = -al;
                    diag[j] = 1.0 + 2.0 * al;
                    rhs[j] = v[q] + al * (v[q + s] - 2.0 * v[q] + v[q - s]);
                }
            }
            if boundary == Boundary::Extrapolate {
                self.shifted_ends(p, s, n, scale, v, &mut lower, &mut diag, &mut upper, &mut rhs);
            }
            thomas(&lower, &mut diag, &upper, &mut rhs);
            for j in 0..n {
                v[p + j * s] = rhs[j];
            }
        }
        self.apply_boundary(v, boundary);
    }
}

impl Nodes {
    /// Replace the end rows of the Crank–Nicolson system by the one-sided
    /// stencil `v_0 - 2v_1 + v_2` (exact on quadratics), eliminating the
    /// third unknown against the neighbouring row to stay tridiagonal.
    #[allow(clippy::too_many_arguments)]
    fn shifted_ends(
        &self,
        p: usize,
        s: usize,
        n: usize,
        scale: f64,
        v: &[f64],
        lower: &mut [f64],
        diag: &mut [f64],
        upper: &mut [f64],
        rhs: &mut [f64],
    ) {
        let a = &self.half_a[self.axis_of(s)];
        let (a0, a1) = (scale * a[p], scale * a[p + s]);
        if a0 > 0.0 && a1 > 0.0 {
            let f = a0 / a1;
            let r0 = v[p] + a0 * (v[p] - 2.0 * v[p + s] + v[p + 2 * s]);
            diag[0] = 1.0;
            upper[0] = -f;
            rhs[0] = r0 - f * rhs[1];
        }
        let (q, q1) = (p + (n - 1) * s, p + (n - 2) * s);
        let (an, an1) = (scale * a[q], scale * a[q1]);
        if an > 0.0 && an1 > 0.0 {
            let f = an / an1;
            let rn = v[q] + an * (v[q] - 2.0 * v[q1] + v[q1 - s]);
            diag[n - 1] = 1.0;
            lower[n - 1] = -f;
            rhs[n - 1] = rn - f * rhs[n - 2];
        }
    }

    fn axis_of(&self, stride: usize) -> usize {
        self.strides.iter().position(|&s| s == stride).unwrap_or(0)
    }
}

/// Solve a tridiagonal system in place; the solution overwrites `rhs`.
fn thomas(lower: &[f64], diag: &mut [f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    for j in 1..n {
        let m = lower[j] / diag[j - 1];
        diag[j] -= m * upper[j - 1];
        rhs[j] -= m * rhs[j - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for j in (0..n - 1).rev() {
        rhs[j] = (rhs[j] - upper[j] * rhs[j + 1]) / diag[j];
    }
}

/// Evolve `∂_s v = ½a_ii∂_ii v + a_01∂_01 v + (b + β r(s))·Dv + (c + γ r(s)) v`
/// from `s = 0` over `steps` steps of size `dt`, storing `v` after the steps
/// listed in `record` (sorted, may repeat).
#[allow(clippy::too_many_arguments)]
fn evolve<R: Fn(f64, &mut [f64])>(
    nodes: &Nodes,
    mut v: Vec<f64>,
    dt: f64,
    steps: usize,
    rate: R,
    record: &[usize],
    boundary: Boundary,
) -> Vec<Vec<f64>> {
    let len = nodes.len();
    let mut out = vec![Vec::new(); record.len()];
    let store = |j: usize, v: &[f64], out: &mut Vec<Vec<f64>>| {
        for (slot, &r) in record.iter().enumerate() {
            if r == j {
                out[slot] = v.to_vec();
            }
        }
    };
    nodes.apply_boundary(&mut v, boundary);
    store(0, &v, &mut out);
    let mut r = vec![0.0; nodes.e];
    let mut k1 = vec![0.0; len];
    let mut v1 = vec![0.0; len];
    let mut v2 = vec![0.0; len];
    for j in 0..steps {
        let s = j as f64 * dt;
        for i in 0..nodes.d {
            nodes.diffuse(&mut v, i, 0.5 * dt, boundary);
        }
        // SSP-RK3 on the first- and zero-order part
        rate(s, &mut r);
        nodes.explicit(&v, &r, &mut k1);
        for p in 0..len {
            v1[p] = v[p] + dt * k1[p];
        }
        nodes.apply_boundary(&mut v1, boundary);
        rate(s + dt, &mut r);
        nodes.explicit(&v1, &r, &mut k1);
        for p in 0..len {
            v2[p] = 0.75 * v[p] + 0.25 * (v1[p] + dt * k1[p]);
        }
        nodes.apply_boundary(&mut v2, boundary);
        rate(s + 0.5 * dt, &mut r);
        nodes.explicit(&v2, &r, &mut k1);
        for p in 0..len {
            v[p] = v[p] / 3.0 + 2.0 / 3.0 * (v2[p] + dt * k1[p]);
        }
        nodes.apply_boundary(&mut v, boundary);
        for i in (0..nodes.d).rev() {
            nodes.diffuse(&mut v, i, 0.5 * dt, boundary);
        }
        store(j + 1, &v, &mut out);
    }
    out
}

fn max_rates(driver: &SmoothDriver) -> Vec<f64> {
    let e = driver.dim();
    let mut m = vec![0.0f64; e];
    for row in driver.rates().chunks(e) {
        for k in 0..e {
            m[k] = m[k].max(row[k].abs());
        }
    }
    m
}

fn step_of(t: f64, dt: f64, steps: usize) -> Result<usize> {
    let j = (t / dt).round();
    if j < 0.0 || j as usize > steps || (j * dt - t).abs() > 1e-9 * (dt * steps as f64).max(1.0) {
        return Err(Error::NotOnGrid(t));
    }
    Ok(j as usize)
}

fn smooth_id(driver: &SmoothDriver) -> String {
    let parts: Vec<String> = driver.source().iter().map(|e| e.to_string()).collect();
    format!("smooth[{}]", parts.join(", "))
}

fn field(
    opts: &FdOptions,
    time_indices: Vec<usize>,
    values: Vec<Vec<f64>>,
    datum: &Expr,
    driver: &SmoothDriver,
) -> BackwardField {
    let n = opts.space.len();
    BackwardField {
        time_indices,
        times: opts.record.clone(),
        space: opts.space.clone(),
        std_errors: vec![vec![0.0; n]; values.len()],
        values,
        datum: datum.to_string(),
        provenance: Provenance {
            particles: 0,
            seed: 0,
            subgrid: 0,
            driver_id: smooth_id(driver),
        },
    }
}

/// Terminal-value problem `-∂_t u = Lu + Γ_k u Ẇ^k`, `u(T) = g`, on the
/// box of `opts.space` with `opts.time_steps` uniform steps on `[0, T]`.
pub fn fd_backward_solve(
    coeffs: &OperatorCoefficients,
    g: &Expr,
    driver: &SmoothDriver,
    opts: &FdOptions,
) -> Result<BackwardField> {
    ensure_dim(coeffs.rough_dim(), driver.dim())?;
    let nodes = Nodes::new(coeffs, &opts.space)?;
    let horizon = driver.horizon();
    let steps = opts.time_steps.max(1);
    let dt = horizon / steps as f64;
    nodes.check_stability(dt, &max_rates(driver))?;
    let record = opts
        .record
        .iter()
        .map(|&t| step_of(horizon - t, dt, steps))
        .collect::<Result<Vec<_>>>()?;
    let init: Vec<f64> = opts.space.points().iter().map(|x| g.eval(x, 0.0)).collect();
    let rate = |tau: f64, out: &mut [f64]| driver.rate_at(horizon - tau, out);
    let values = evolve(&nodes, init, dt, steps, rate, &record, opts.boundary);
    let indices = record.iter().map(|j| steps - j).collect();
    Ok(field(opts, indices, values, g, driver))
}

/// Initial-value problem `∂_t p = L*p + Γ*_k p Ẇ^k`, `p(0) = p0`, using the
/// adjoint coefficients.
pub fn fd_forward_solve(
    coeffs: &OperatorCoefficients,
    p0: &Expr,
    driver: &SmoothDriver,
    opts: &FdOptions,
) -> Result<BackwardField> {
    ensure_dim(coeffs.rough_dim(), driver.dim())?;
    let adj = coeffs.adjoint()?;
    let nodes = Nodes::new(&adj, &opts.space)?;
    let horizon = driver.horizon();
    let steps = opts.time_steps.max(1);
    let dt = horizon / steps as f64;
    nodes.check_stability(dt, &max_rates(driver))?;
    let record = opts
        .record
        .iter()
        .map(|&t| step_of(t, dt, steps))
        .collect::<Result<Vec<_>>>()?;
    let init: Vec<f64> = opts.space.points().iter().map(|x| p0.eval(x, 0.0)).collect();
    let rate = |t: f64, out: &mut [f64]| driver.rate_at(t, out);
    let values = evolve(&nodes, init, dt, steps, rate, &record, opts.boundary);
    Ok(field(opts, record, values, p0, driver))
}
