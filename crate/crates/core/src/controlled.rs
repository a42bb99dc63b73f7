//! Controlled paths and rough integration.
//!
//! A controlled path `(Y, Y′)` takes values in `rows × cols` matrices (a
//! scalar is `1 × 1`, a vector is `n × 1`). The Gubinelli derivative is
//! stored with one extra trailing index over the driver components:
//! `Y′[(i,j), k] = ∂Y^{ij}/∂W^k`, flat offset `((i·cols + j)·e + k)`.
//!
//! Rough integrals `∫ Y dW` require `cols = e` and return an `rows`-vector
//! through the compensated sum `Σ_j Y^{ij} W^j + Σ_{j,k} Y′^{(ij),k} 𝕎^{kj}`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::roughpath::{norm, Increment, RoughPath};

#[derive(Clone, Debug)]
pub struct ControlledPath {
    reference: Arc<RoughPath>,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

/// Dyadic-coarsening diagnostics of a compensated sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub factors: Vec<usize>,
    pub meshes: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// `|S_{f_k} - S_{f_{k+1}}|` for consecutive coarsening factors.
    pub differences: Vec<f64>,
    /// Least-squares slope of `log difference` against `log mesh`.
    pub observed_order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoughIntegral {
    pub value: Vec<f64>,
    pub report: ConvergenceReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlledNorm {
    pub deriv_holder: f64,
    pub remainder_holder: f64,
}

impl ControlledNorm {
    pub fn seminorm(&self) -> f64 {
        self.deriv_holder + self.remainder_holder
    }
}

impl ControlledPath {
    pub fn new(
        reference: Arc<RoughPath>,
        shape: (usize, usize),
        values: Vec<f64>,
        derivs: Vec<f64>,
    ) -> Result<ControlledPath> {
        let n = reference.grid().len();
        let size = shape.0 * shape.1;
        ensure_dim(n * size, values.len())?;
        ensure_dim(n * size * reference.dim(), derivs.len())?;
        Ok(ControlledPath {
            reference,
            rows: shape.0,
            cols: shape.1,
            values,
            derivs,
        })
    }

    /// `(W, I)` as an `e × 1` controlled path.
    pub fn from_reference(reference: Arc<RoughPath>) -> ControlledPath {
        let e = reference.dim();
        let values = reference.values();
        let mut eye = vec![0.0; e * e];
        for i in 0..e {
            eye[i * e + i] = 1.0;
        }
        let derivs = eye.repeat(reference.grid().len());
        ControlledPath {
            reference,
            rows: e,
            cols: 1,
            values,
            derivs,
        }
    }

    /// `(c, 0)` for a constant matrix `c`.
    pub fn constant(reference: Arc<RoughPath>, shape: (usize, usize), c: &[f64]) -> Result<ControlledPath> {
        ensure_dim(shape.0 * shape.1, c.len())?;
        let n = reference.grid().len();
        let e = reference.dim();
        let values = c.repeat(n);
        let derivs = vec![0.0; n * c.len() * e];
        ControlledPath::new(reference, shape, values, derivs)
    }

    pub fn reference(&self) -> &Arc<RoughPath> {
        &self.reference
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn size(&self) -> usize {
        self.rows * self.cols
    }

    pub fn len(&self) -> usize {
        self.reference.grid().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, k: usize) -> &[f64] {
        let s = self.size();
        &self.values[k * s..(k + 1) * s]
    }

    pub fn deriv(&self, k: usize) -> &[f64] {
        let s = self.size() * self.reference.dim();
        &self.derivs[k * s..(k + 1) * s]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivs(&self) -> &[f64] {
        &self.derivs
    }

    fn same_reference(&self, other: &ControlledPath) -> Result<()> {
        if Arc::ptr_eq(&self.reference, &other.reference) || *self.reference == *other.reference {
            Ok(())
        } else {
            Err(Error::ReferenceMismatch)
        }
    }

    fn check_integrable(&self) -> Result<()> {
        ensure_dim(self.reference.dim(), self.cols)
    }

    /// One compensated-sum term `Y_u W_{u,v} + Y′_u 𝕎_{u,v}` added to `acc`.
    #[inline]
    fn accumulate(&self, k: usize, inc: &Increment, acc: &mut [f64]) {
        self.accumulate_slices(k, &inc.first, &inc.second, acc);
    }

    #[inline]
    fn accumulate_slices(&self, k: usize, w: &[f64], ww: &[f64], acc: &mut [f64]) {
        let e = self.cols;
        let y = self.value(k);
        let dy = self.deriv(k);
        for (i, a) in acc.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..e {
                s += y[i * e + j] * w[j];
                let d = &dy[(i * e + j) * e..(i * e + j + 1) * e];
                for (kk, dk) in d.iter().enumerate() {
                    s += dk * ww[kk * e + j];
                }
            }
            *a += s;
        }
    }

    fn compensated_sum(&self, start: usize, end: usize, factor: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.rows];
        let mut u = start;
        while u < end {
            let v = (u + factor).min(end);
            if factor == 1 {
                self.accumulate_slices(
                    u,
                    self.reference.step_first(u),
                    self.reference.step_second(u),
                    &mut acc,
                );
            } else {
                self.accumulate(u, &self.reference.increment(u, v), &mut acc);
            }
            u = v;
        }
        acc
    }

    /// `∫_s^t Y dW` at full grid resolution, with a report built from the
    /// 2×, 4×, ... coarsened sums (`levels` sums in total, default 5).
    pub fn rough_integral(&self, s: f64, t: f64) -> Result<RoughIntegral> {
        self.rough_integral_levels(s, t, 5)
    }

    pub fn rough_integral_levels(&self, s: f64, t: f64, levels: usize) -> Result<RoughIntegral> {
        self.check_integrable()?;
        let grid = self.reference.grid();
        let i = grid.index_of(s)?;
        let j = grid.index_of(t)?;
        if i > j {
            return Err(Error::InvalidGrid(format!("interval [{s}, {t}] is reversed")));
        }
        let mut factors = Vec::new();
        let mut f = 1usize;
        while factors.len() < levels.max(1) && (f == 1 || f < (j - i).max(1)) {
            factors.push(f);
            f *= 2;
        }
        let values: Vec<Vec<f64>> = factors
            .iter()
            .map(|&f| self.compensated_sum(i, j, f))
            .collect();
        let meshes: Vec<f64> = factors
            .iter()
            .map(|&f| {
                let mut m: f64 = 0.0;
                let mut u = i;
                while u < j {
                    let v = (u + f).min(j);
                    m = m.max(grid.time(v) - grid.time(u));
                    u = v;
                }
                m
            })
            .collect();
        let differences: Vec<f64> = values
            .windows(2)
            .map(|w| {
                let d: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| a - b).collect();
                norm(&d)
            })
            .collect();
        let observed_order = fit_order(&meshes[..differences.len()], &differences);
        Ok(RoughIntegral {
            value: values[0].clone(),
            report: ConvergenceReport {
                factors,
                meshes,
                values,
                differences,
                observed_order,
            },
        })
    }

    /// Running integral `t_k ↦ ∫_0^{t_k} Y dW` at every grid point (flat, `len × rows`).
    pub fn integral_path(&self) -> Result<Vec<f64>> {
        self.check_integrable()?;
        let n = self.reference.steps();
        let mut out = vec![0.0; (n + 1) * self.rows];
        let mut acc = vec![0.0; self.rows];
        for k in 0..n {
            self.accumulate_slices(
                k,
                self.reference.step_first(k),
                self.reference.step_second(k),
                &mut acc,
            );
            out[(k + 1) * self.rows..(k + 2) * self.rows].copy_from_slice(&acc);
        }
        Ok(out)
    }

    /// `(AB, A′B + AB′)` for matrix-shaped `A` (`p×q`) and `B` (`q×r`).
    pub fn product(&self, other: &ControlledPath) -> Result<ControlledPath> {
        self.same_reference(other)?;
        ensure_dim(self.cols, other.rows)?;
        let (p, q, r) = (self.rows, self.cols, other.cols);
        let e = self.reference.dim();
        let n = self.len();
        let mut values = vec![0.0; n * p * r];
        let mut derivs = vec![0.0; n * p * r * e];
        for k in 0..n {
            let a = self.value(k);
            let b = other.value(k);
            let da = self.deriv(k);
            let db = other.deriv(k);
            let v = &mut values[k * p * r..(k + 1) * p * r];
            let d = &mut derivs[k * p * r * e..(k + 1) * p * r * e];
            for i in 0..p {
                for j in 0..r {
                    for l in 0..q {
                        v[i * r + j] += a[i * q + l] * b[l * r + j];
                        for c in 0..e {
                            d[(i * r + j) * e + c] += da[(i * q + l) * e + c] * b[l * r + j]
                                + a[i * q + l] * db[(l * r + j) * e + c];
                        }
                    }
                }
            }
        }
        ControlledPath::new(self.reference.clone(), (p, r), values, derivs)
    }

    /// `(φ(Y), Dφ(Y) Y′)`. `phi` maps the flattened value of `Y` to an output
    /// of shape `out_shape`; `dphi` returns its Jacobian, row-major
    /// `(out size) × (Y size)`.
    pub fn compose_smooth<F, D>(&self, out_shape: (usize, usize), phi: F, dphi: D) -> Result<ControlledPath>
    where
        F: Fn(&[f64]) -> Vec<f64>,
        D: Fn(&[f64]) -> Vec<f64>,
    {
        let e = self.reference.dim();
        let m = self.size();
        let o = out_shape.0 * out_shape.1;
        let n = self.len();
        let mut values = Vec::with_capacity(n * o);
        let mut derivs = vec![0.0; n * o * e];
        for k in 0..n {
            let y = self.value(k);
            let fy = phi(y);
            ensure_dim(o, fy.len())?;
            let jac = dphi(y);
            ensure_dim(o * m, jac.len())?;
            values.extend(fy);
            let dy = self.deriv(k);
            let d = &mut derivs[k * o * e..(k + 1) * o * e];
            for a in 0..o {
                for b in 0..m {
                    let jab = jac[a * m + b];
                    if jab == 0.0 {
                        continue;
                    }
                    for c in 0..e {
                        d[a * e + c] += jab * dy[b * e + c];
                    }
                }
            }
        }
        ControlledPath::new(self.reference.clone(), out_shape, values, derivs)
    }

    /// `(Y_{T-·}, Y′_{T-·})`, controlled by the reversed reference path.
    pub fn time_reverse(&self) -> ControlledPath {
        let n = self.len();
        let s = self.size();
        let se = s * self.reference.dim();
        let mut values = Vec::with_capacity(self.values.len());
        let mut derivs = Vec::with_capacity(self.derivs.len());
        for k in (0..n).rev() {
            values.extend_from_slice(&self.values[k * s..(k + 1) * s]);
            derivs.extend_from_slice(&self.derivs[k * se..(k + 1) * se]);
        }
        ControlledPath {
            reference: Arc::new(self.reference.reversed()),
            rows: self.rows,
            cols: self.cols,
            values,
            derivs,
        }
    }

    /// Remainder `R_{s,t} = Y_{s,t} - Y′_s W_{s,t}` between grid indices.
    pub fn remainder(&self, i: usize, j: usize) -> Vec<f64> {
        let e = self.reference.dim();
        let w = self.reference.increment(i, j).first;
        self.remainder_with(i, j, &w, e)
    }

    fn remainder_with(&self, i: usize, j: usize, w: &[f64], e: usize) -> Vec<f64> {
        let yi = self.value(i);
        let yj = self.value(j);
        let d = self.deriv(i);
        (0..self.size())
            .map(|p| {
                let lin: f64 = (0..e).map(|c| d[p * e + c] * w[c]).sum();
                yj[p] - yi[p] - lin
            })
            .collect()
    }

    /// Grid estimates of `‖Y′‖_α` and `‖R‖_{2α}` over `[0, T]`, pairs up to
    /// `max_lag` steps apart (`None` = all pairs).
    pub fn controlled_norm(&self, max_lag: Option<usize>) -> ControlledNorm {
        let reference = &self.reference;
        let alpha = reference.alpha();
        let e = reference.dim();
        let n = reference.steps();
        let t = reference.grid().times();
        let w = reference.values();
        let lag = max_lag.unwrap_or(n).max(1);
        let mut deriv_holder: f64 = 0.0;
        let mut remainder_holder: f64 = 0.0;
        let mut dw = vec![0.0; e];
        for i in 0..n {
            for j in (i + 1)..=(i + lag).min(n) {
                let h = t[j] - t[i];
                for c in 0..e {
                    dw[c] = w[j * e + c] - w[i * e + c];
                }
                let ddiff: Vec<f64> = self
                    .deriv(j)
                    .iter()
                    .zip(self.deriv(i))
                    .map(|(a, b)| a - b)
                    .collect();
                deriv_holder = deriv_holder.max(norm(&ddiff) / h.powf(alpha));
                let r = self.remainder_with(i, j, &dw, e);
                remainder_holder = remainder_holder.max(norm(&r) / h.powf(2.0 * alpha));
            }
        }
        ControlledNorm {
            deriv_holder,
            remainder_holder,
        }
    }
}

/// Least-squares slope of `log y` against `log x`, ignoring zero entries.
pub fn fit_order(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use crate::roughpath::{brownian_lift, lift_piecewise_linear, pure_area, Grid};
    use proptest::prelude::*;

    fn linear_path(n: usize) -> Arc<RoughPath> {
        let grid = Grid::uniform(1.0, n).unwrap();
        let s: Vec<Vec<f64>> = grid.times().iter().map(|&t| vec![t]).collect();
        Arc::new(lift_piecewise_linear(&grid, &s, 0.5).unwrap().into_inner())
    }

    fn square(w: &Arc<RoughPath>) -> ControlledPath {
        let v = w.values();
        ControlledPath::new(
            w.clone(),
            (1, 1),
            v.iter().map(|x| x * x).collect(),
            v.iter().map(|x| 2.0 * x).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_integrand() {
        let w = linear_path(16);
        let y = ControlledPath::constant(w, (1, 1), &[0.0]).unwrap();
        assert_eq!(y.rough_integral(0.0, 1.0).unwrap().value, vec![0.0]);
    }

    #[test]
    fn w_dw_is_half() {
        let w = linear_path(64);
        let y = ControlledPath::from_reference(w);
        let r = y.rough_integral(0.0, 1.0).unwrap();
        assert!((r.value[0] - 0.5).abs() < 1e-14);
        assert!(r.report.differences.iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn pure_area_contraction() {
        let grid = Grid::uniform(1.0, 32).unwrap();
        let w = Arc::new(pure_area(&grid, 1.0, 0.5).unwrap().into_inner());
        let n = grid.len();
        // Y′ = identity: trace of the antisymmetric area vanishes
        let mut eye = vec![0.0; 4];
        eye[0] = 1.0;
        eye[3] = 1.0;
        let y = ControlledPath::new(w.clone(), (1, 2), vec![0.0; 2 * n], eye.repeat(n)).unwrap();
        assert_eq!(y.rough_integral(0.0, 1.0).unwrap().value, vec![0.0]);
        // Y′[(0,0), 1] = 1 picks 𝕎^{10}_{0,1} = -1
        let sel = vec![0.0, 1.0, 0.0, 0.0];
        let y = ControlledPath::new(w, (1, 2), vec![0.0; 2 * n], sel.repeat(n)).unwrap();
        let v = y.rough_integral(0.0, 1.0).unwrap().value[0];
        assert!((v + 1.0).abs() < 1e-14);
    }

    #[test]
    fn product_examples() {
        let w = linear_path(16);
        let a = ControlledPath::from_reference(w.clone());
        let p = a.product(&a).unwrap();
        let sq = square(&w);
        assert_eq!(p.values(), sq.values());
        assert_eq!(p.derivs(), sq.derivs());

        let c = ControlledPath::constant(w.clone(), (1, 1), &[3.0]).unwrap();
        let cb = c.product(&sq).unwrap();
        assert!(cb.values().iter().zip(sq.values()).all(|(x, y)| *x == 3.0 * y));
        assert!(cb.derivs().iter().zip(sq.derivs()).all(|(x, y)| *x == 3.0 * y));

        let z = ControlledPath::constant(w, (1, 1), &[0.0]).unwrap();
        let az = a.product(&z).unwrap();
        assert!(az.values().iter().chain(az.derivs()).all(|&x| x == 0.0));
    }

    #[test]
    fn product_reference_mismatch() {
        let a = ControlledPath::from_reference(linear_path(16));
        let b = ControlledPath::from_reference(linear_path(8));
        assert!(matches!(a.product(&b), Err(Error::ReferenceMismatch)));
    }

    #[test]
    fn compose_examples() {
        let w = linear_path(16);
        let a = ControlledPath::from_reference(w.clone());
        let id = a.compose_smooth((1, 1), |y| y.to_vec(), |_| vec![1.0]).unwrap();
        assert_eq!(id.values(), a.values());
        assert_eq!(id.derivs(), a.derivs());
        let c = a.compose_smooth((1, 1), |_| vec![2.5], |_| vec![0.0]).unwrap();
        assert!(c.values().iter().all(|&x| x == 2.5));
        assert!(c.derivs().iter().all(|&x| x == 0.0));
        let sq = a.compose_smooth((1, 1), |y| vec![y[0] * y[0]], |y| vec![2.0 * y[0]]).unwrap();
        let p = a.product(&a).unwrap();
        assert_eq!(sq.values(), p.values());
        assert_eq!(sq.derivs(), p.derivs());
    }

    #[test]
    fn time_reverse_examples() {
        let grid = Grid::uniform(1.0, 32).unwrap();
        let w = Arc::new(brownian_lift(&mut Stream::new(1, 0), &grid, 1, 0.45, 4).unwrap().into_inner());
        let a = ControlledPath::from_reference(w.clone());
        let rr = a.time_reverse().time_reverse();
        assert_eq!(rr.values(), a.values());
        assert_eq!(rr.derivs(), a.derivs());

        let c = ControlledPath::constant(w, (1, 1), &[4.0]).unwrap();
        let rc = c.time_reverse();
        assert!(rc.values().iter().all(|&x| x == 4.0));

        // (W, 1) reversed is still (W̃, 1) with zero remainder
        let r = a.time_reverse();
        assert!(r.derivs().iter().all(|&x| x == 1.0));
        let n = r.controlled_norm(None);
        assert!(n.remainder_holder < 1e-12);
    }

    #[test]
    fn controlled_norm_examples() {
        let w = linear_path(64);
        let c = ControlledPath::constant(w.clone(), (1, 1), &[1.0]).unwrap();
        assert_eq!(c.controlled_norm(None), ControlledNorm { deriv_holder: 0.0, remainder_holder: 0.0 });
        let a = ControlledPath::from_reference(w.clone());
        assert!(a.controlled_norm(None).remainder_holder <= 1e-12);
        let sq = square(&w);
        let n = sq.controlled_norm(None);
        assert!((n.remainder_holder - 1.0).abs() < 1e-12);
        // ‖2W‖_{1/2} = sup 2(t-s)/(t-s)^{1/2} = 2
        assert!((n.deriv_holder - 2.0).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let grid = Grid::uniform(1.0, 4).unwrap();
        let w = Arc::new(pure_area(&grid, 1.0, 0.5).unwrap().into_inner());
        let y = ControlledPath::constant(w.clone(), (1, 1), &[1.0]).unwrap();
        assert!(y.rough_integral(0.0, 1.0).is_err());
        assert!(ControlledPath::new(w, (1, 2), vec![0.0; 3], vec![]).is_err());
        let y = ControlledPath::from_reference(linear_path(4));
        assert!(matches!(y.rough_integral(0.0, 0.3), Err(Error::NotOnGrid(_))));
    }

    #[test]
    fn fit_order_recovers_slope() {
        let x = [0.1, 0.05, 0.025];
        let y: Vec<f64> = x.iter().map(|h: &f64| 3.0 * h.powf(1.5)).collect();
        assert!((fit_order(&x, &y).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(fit_order(&x, &[0.0; 3]), None);
    }

    proptest! {
        #[test]
        fn product_and_compose_are_pointwise(seed in 0u64..1000) {
            let grid = Grid::uniform(1.0, 16).unwrap();
            let w = Arc::new(brownian_lift(&mut Stream::new(seed, 0), &grid, 2, 0.45, 2).unwrap().into_inner());
            let a = ControlledPath::from_reference(w.clone());
            // WᵀW as (1×2)(2×1)
            let v = w.values();
            let at = ControlledPath::new(w.clone(), (1, 2), v.clone(), a.derivs().to_vec()).unwrap();
            let p = at.product(&a).unwrap();
            let c = a.compose_smooth((1, 1), |y| vec![y[0].sin() * y[1]], |y| vec![y[0].cos() * y[1], y[0].sin()]).unwrap();
            for k in 0..grid.len() {
                let x = &v[2 * k..2 * k + 2];
                prop_assert_eq!(p.value(k)[0], x[0] * x[0] + x[1] * x[1]);
                prop_assert_eq!(c.value(k)[0], x[0].sin() * x[1]);
            }
        }
    }
}
