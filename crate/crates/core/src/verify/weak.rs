use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controlled::{ControlledNorm, ControlledPath};
use crate::error::{ensure_dim, Error, Result};
use crate::expr::{Compiled, Expr};
use crate::feynman_kac::{BackwardField, ExpDecayFunction, OperatorCoefficients, ParticleMeasure, SpaceGrid};
use crate::roughpath::RoughPath;

/// Largest admissible contribution of the mass outside the space box.
pub const TAIL_LIMIT: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResidual {
    pub name: String,
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
    pub sup_residual: f64,
    /// Normalization of the test function (`⟨1,|φ|⟩` or `ν(1)`).
    pub scale: f64,
    pub norm: ControlledNorm,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Relative tolerance; a test passes when `sup_residual <= tolerance · scale`.
    pub tolerance: f64,
    pub tests: Vec<TestResidual>,
}

impl ResidualReport {
    pub fn pass(&self) -> bool {
        self.tests.iter().all(|t| t.pass)
    }

    /// Largest `sup_residual / scale`.
    pub fn worst(&self) -> f64 {
        self.tests.iter().map(|t| t.sup_residual / t.scale).fold(0.0, f64::max)
    }
}

/// Driver steps between consecutive records, as a path on the record grid.
fn record_path(driver: &RoughPath, indices: &[usize]) -> Result<RoughPath> {
    if indices.len() < 2 {
        return Err(Error::TooFewSamples(indices.len()));
    }
    let (k0, kn) = (indices[0], *indices.last().unwrap());
    let shifted: Vec<usize> = indices.iter().map(|k| k - k0).collect();
    driver.restricted(k0, kn)?.subsampled(&shifted)
}

/// Running trapezoid integral of `y` over `t`.
fn running_trapezoid(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; t.len()];
    for k in 1..t.len() {
        out[k] = out[k - 1] + 0.5 * (t[k] - t[k - 1]) * (y[k] + y[k - 1]);
    }
    out
}

/// `∫ |ψ|` over `[-3L, 3L]^d` minus the box `[-L, L]^d`, by the midpoint rule.
fn outer_mass(psi: &Compiled, space: &SpaceGrid) -> f64 {
    let d = space.dim();
    let l = space
        .axes()
        .iter()
        .map(|a| a[0].abs().max(a[a.len() - 1].abs()))
        .fold(0.0, f64::max);
    let n: usize = if d == 1 { 800 } else if d == 2 { 240 } else { 24 };
    let h = 6.0 * l / n as f64;
    let total = n.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut s = 0.0;
    for p in 0..total {
        let mut q = p;
        for xi in x.iter_mut() {
            *xi = -3.0 * l + h * ((q % n) as f64 + 0.5);
            q /= n;
        }
        if x.iter().all(|v| v.abs() <= l) {
            continue;
        }
        s += psi.eval(&x, 0.0).abs();
    }
    s * h.powi(d as i32)
}

fn check_tail(sup_u: f64, exprs: &[&Expr], space: &SpaceGrid) -> Result<()> {
    let bound: f64 = sup_u * exprs.iter().map(|e| outer_mass(&e.compile(), space)).sum::<f64>();
    if bound > TAIL_LIMIT {
        return Err(Error::QuadratureTail {
            bound,
            limit: TAIL_LIMIT,
        });
    }
    Ok(())
}

fn pairing(weights: &[f64], u: &[f64], psi: &[f64]) -> f64 {
    weights.iter().zip(u).zip(psi).map(|((w, a), b)| w * a * b).sum()
}

/// Residuals of the weak backward equation
/// `⟨u_t,φ⟩ = ⟨g,φ⟩ + ∫_t^T ⟨u_r,L*φ⟩dr + ∫_t^T ⟨u_r,Γ*φ⟩d𝐖_r`
/// at every record of `u`, with `Y = ⟨u,Γ*_kφ⟩`, `Y′ = -⟨u,Γ*_jΓ*_kφ⟩`.
///
/// `g` is parsed from the field's datum; if that fails the terminal row is used.
pub fn check_weak_backward(
    u: &BackwardField,
    coeffs: &OperatorCoefficients,
    driver: &RoughPath,
    tests: &[ExpDecayFunction],
    tolerance: f64,
) -> Result<ResidualReport> {
    let d = coeffs.dim();
    let e = coeffs.rough_dim();
    ensure_dim(d, u.space.dim())?;
    ensure_dim(e, driver.dim())?;
    let path = Arc::new(record_path(driver, &u.time_indices)?);
    let adj = coeffs.adjoint()?;
    let weights = u.space.trapezoid_weights();
    let points = u.space.points();
    let sample = |f: &Expr| -> Vec<f64> {
        let c = f.compile();
        points.iter().map(|x| c.eval(x, 0.0)).collect()
    };
    let last = u.values.len() - 1;
    let datum: Vec<f64> = match Expr::parse(&u.datum) {
        Ok(g) if g.max_var().is_none_or(|i| i < d) => sample(&g),
        _ => u.values[last].clone(),
    };
    let sup_u = u.values.iter().flatten().chain(&datum).fold(0.0f64, |m, v| m.max(v.abs()));
    let rel: Vec<f64> = u.times.iter().map(|t| t - u.times[0]).collect();
    let results = tests
        .par_iter()
        .map(|phi| -> Result<TestResidual> {
            ensure_dim(d, phi.dim())?;
            let f = phi.expr();
            let lstar = adj.apply_generator(f)?;
            let gam: Vec<Expr> = (0..e).map(|k| adj.apply_gamma(k, f)).collect::<Result<_>>()?;
            let mut gam2 = Vec::with_capacity(e * e);
            for g in &gam {
                for j in 0..e {
                    gam2.push(adj.apply_gamma(j, g)?);
                }
            }
            let mut all: Vec<&Expr> = vec![f, &lstar];
            all.extend(gam.iter());
            all.extend(gam2.iter());
            check_tail(sup_u, &all, &u.space)?;
            let s_phi = sample(f);
            let s_l = sample(&lstar);
            let s_g: Vec<Vec<f64>> = gam.iter().map(&sample).collect();
            let s_g2: Vec<Vec<f64>> = gam2.iter().map(&sample).collect();
            let rows = u.values.len();
            let mut p_phi = vec![0.0; rows];
            let mut p_l = vec![0.0; rows];
            let mut y = Vec::with_capacity(rows * e);
            let mut dy = Vec::with_capacity(rows * e * e);
            for (r, row) in u.values.iter().enumerate() {
                p_phi[r] = pairing(&weights, row, &s_phi);
                p_l[r] = pairing(&weights, row, &s_l);
                for s in &s_g {
                    y.push(pairing(&weights, row, s));
                }
                for s in &s_g2 {
                    dy.push(-pairing(&weights, row, s));
                }
            }
            // dy is laid out [k][j] as Y′[(0,k), j]
            let yc = ControlledPath::new(path.clone(), (1, e), y, dy)?;
            let integral = yc.integral_path()?;
            let time = running_trapezoid(&rel, &p_l);
            let g_phi = pairing(&weights, &datum, &s_phi);
            let residuals: Vec<f64> = (0..rows)
                .map(|r| {
                    let rough = integral[last] - integral[r];
                    let drift = time[last] - time[r];
                    (p_phi[r] - g_phi - drift - rough).abs()
                })
                .collect();
            let scale = weights.iter().zip(&s_phi).map(|(w, v)| w * v.abs()).sum::<f64>();
            let sup_residual = residuals.iter().fold(0.0, |m: f64, v| m.max(*v));
            Ok(TestResidual {
                name: f.to_string(),
                times: u.times.clone(),
                residuals,
                sup_residual,
                scale,
                norm: yc.controlled_norm(None),
                pass: sup_residual <= tolerance * scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport {
        tolerance,
        tests: results,
    })
}

/// Residuals of the measure-valued forward equation
/// `ρ_t(f) = ν(f) + ∫_0^t ρ_s(Lf)ds + ∫_0^t ρ_s(Γ_k f)d𝐖^k_s`
/// with `Y = ρ(Γ_k f)`, `Y′ = ρ(Γ_jΓ_k f)`, pairings by particle sums.
/// `ν` is read from the first record.
pub fn check_weak_forward(
    rho: &ParticleMeasure,
    coeffs: &OperatorCoefficients,
    driver: &RoughPath,
    tests: &[Expr],
    tolerance: f64,
) -> Result<ResidualReport> {
    let d = coeffs.dim();
    let e = coeffs.rough_dim();
    ensure_dim(d, rho.dim)?;
    ensure_dim(e, driver.dim())?;
    let path = Arc::new(record_path(driver, &rho.time_indices)?);
    let rows = rho.records();
    let rel: Vec<f64> = rho.times.iter().map(|t| t - rho.times[0]).collect();
    let results = tests
        .par_iter()
        .map(|f| -> Result<TestResidual> {
            let lf = coeffs.apply_generator(f)?.compile();
            let gam: Vec<Expr> = (0..e).map(|k| coeffs.apply_gamma(k, f)).collect::<Result<_>>()?;
            let mut gam2 = Vec::with_capacity(e * e);
            for g in &gam {
                for j in 0..e {
                    gam2.push(coeffs.apply_gamma(j, g)?.compile());
                }
            }
            let gam: Vec<Compiled> = gam.iter().map(|g| g.compile()).collect();
            let fc = f.compile();
            let pair = |r: usize, c: &Compiled| -> Result<f64> { Ok(rho.pair(r, |x| c.eval(x, 0.0))?.mean) };
            let mut p_f = vec![0.0; rows];
            let mut p_l = vec![0.0; rows];
            let mut y = Vec::with_capacity(rows * e);
            let mut dy = Vec::with_capacity(rows * e * e);
            for r in 0..rows {
                p_f[r] = pair(r, &fc)?;
                p_l[r] = pair(r, &lf)?;
                for g in &gam {
                    y.push(pair(r, g)?);
                }
                for g in &gam2 {
                    dy.push(pair(r, g)?);
                }
            }
            let yc = ControlledPath::new(path.clone(), (1, e), y, dy)?;
            let integral = yc.integral_path()?;
            let time = running_trapezoid(&rel, &p_l);
            let residuals: Vec<f64> = (0..rows)
                .map(|r| (p_f[r] - p_f[0] - time[r] - integral[r]).abs())
                .collect();
            let sup_residual = residuals.iter().fold(0.0, |m: f64, v| m.max(*v));
            let scale = rho.mass;
            Ok(TestResidual {
                name: f.to_string(),
                times: rho.times.clone(),
                residuals,
                sup_residual,
                scale,
                norm: yc.controlled_norm(None),
                pass: sup_residual <= tolerance * scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualReport {
        tolerance,
        tests: results,
    })
}
