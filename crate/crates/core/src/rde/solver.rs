use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fields::{LinearFields, VectorFields};
use crate::controlled::fit_order;
use crate::error::{ensure_dim, Error, Result};
use crate::roughpath::{norm, Grid, RoughPath};

/// Scratch buffers for [`davie_step`].
#[derive(Clone, Debug)]
pub struct DavieWorkspace {
    d: usize,
    e: usize,
    v: Vec<f64>,
    dv: Vec<f64>,
    b: Vec<f64>,
    u: Vec<f64>,
}

impl DavieWorkspace {
    pub fn new(d: usize, e: usize) -> Self {
        DavieWorkspace {
            d,
            e,
            v: vec![0.0; e * d],
            dv: vec![0.0; e * d * d],
            b: vec![0.0; d],
            u: vec![0.0; e * d],
        }
    }

    pub fn for_fields<F: VectorFields + ?Sized>(f: &F) -> Self {
        Self::new(f.state_dim(), f.driver_dim())
    }

    /// Field values from the last step (`e × d`).
    pub fn last_fields(&self) -> &[f64] {
        &self.v
    }

    pub fn fields_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }
}

/// One step `x ← x + b(x)Δt + V_k(x)W^k + DV_b(x)V_a(x)𝕎^{ab}`.
#[inline]
pub fn davie_step<F: VectorFields + ?Sized>(
    f: &F,
    x: &mut [f64],
    w: &[f64],
    ww: &[f64],
    dt: f64,
    ws: &mut DavieWorkspace,
) {
    f.fields(x, &mut ws.v);
    davie_advance(f, x, w, ww, dt, ws);
}

/// Second half of [`davie_step`]: assumes `ws` already holds `V(x)`
/// (see [`DavieWorkspace::fields_mut`]).
#[inline]
pub fn davie_advance<F: VectorFields + ?Sized>(
    f: &F,
    x: &mut [f64],
    w: &[f64],
    ww: &[f64],
    dt: f64,
    ws: &mut DavieWorkspace,
) {
    let (d, e) = (ws.d, ws.e);
    let mut has_area = false;
    // u_b = Σ_a V_a 𝕎^{ab}
    for b in 0..e {
        let ub = &mut ws.u[b * d..(b + 1) * d];
        ub.iter_mut().for_each(|v| *v = 0.0);
        for a in 0..e {
            let z = ww[a * e + b];
            if z != 0.0 {
                has_area = true;
                for i in 0..d {
                    ub[i] += ws.v[a * d + i] * z;
                }
            }
        }
    }
    if has_area {
        f.field_jacobians(x, &mut ws.dv);
    }
    if f.has_drift() {
        f.drift(x, &mut ws.b);
    } else {
        ws.b.iter_mut().for_each(|v| *v = 0.0);
    }
    for i in 0..d {
        let mut dx = ws.b[i] * dt;
        for k in 0..e {
            dx += ws.v[k * d + i] * w[k];
        }
        if has_area {
            for b in 0..e {
                let row = &ws.dv[(b * d + i) * d..(b * d + i + 1) * d];
                let ub = &ws.u[b * d..(b + 1) * d];
                for j in 0..d {
                    dx += row[j] * ub[j];
                }
            }
        }
        x[i] += dx;
    }
}

/// Grid-sampled state trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatePath {
    pub grid: Grid,
    pub dim: usize,
    pub states: Vec<f64>,
}

impl StatePath {
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.grid.steps())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|i| format!("X_{i}")));
        w.write_record(&header)?;
        for k in 0..self.grid.len() {
            let mut row = vec![self.grid.time(k).to_string()];
            row.extend(self.state(k).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn warn_smoothness<F: VectorFields + ?Sized>(f: &F, needed: u8, what: &str) {
    if f.smoothness() < needed {
        log::warn!(
            "{what}: fields tagged C^{}_b, the scheme assumes C^{needed}_b",
            f.smoothness()
        );
    }
}

/// Run the Davie scheme on grid steps `start..end`, calling `observe(k, x)`
/// after each step with the index of the grid point reached.
pub fn integrate_range<F, O>(
    f: &F,
    driver: &RoughPath,
    start: usize,
    end: usize,
    x: &mut [f64],
    ws: &mut DavieWorkspace,
    mut observe: O,
) -> Result<()>
where
    F: VectorFields + ?Sized,
    O: FnMut(usize, &[f64]),
{
    let grid = driver.grid();
    for k in start..end {
        davie_step(f, x, driver.step_first(k), driver.step_second(k), grid.dt(k), ws);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                step: k,
                time: grid.time(k + 1),
            });
        }
        observe(k + 1, x);
    }
    Ok(())
}

/// Solve `dX = b(X)dt + V(X) d𝐖` from `x0` over the whole driver grid.
pub fn solve_rde<F: VectorFields + ?Sized>(f: &F, driver: &RoughPath, x0: &[f64]) -> Result<StatePath> {
    ensure_dim(f.state_dim(), x0.len())?;
    ensure_dim(f.driver_dim(), driver.dim())?;
    warn_smoothness(f, 3, "solve_rde");
    let d = f.state_dim();
    let n = driver.steps();
    let mut states = Vec::with_capacity((n + 1) * d);
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut ws = DavieWorkspace::for_fields(f);
    integrate_range(f, driver, 0, n, &mut x, &mut ws, |_, x| states.extend_from_slice(x))?;
    Ok(StatePath {
        grid: driver.grid().clone(),
        dim: d,
        states,
    })
}

/// Linear fields `V_k(z) = A_k z + c_k`; same scheme with exact derivatives.
pub fn solve_linear_rde(fields: &LinearFields, driver: &RoughPath, x0: &[f64]) -> Result<StatePath> {
    solve_rde(fields, driver, x0)
}

/// Dyadic self-convergence of the final state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicStudy {
    pub factors: Vec<usize>,
    pub meshes: Vec<f64>,
    pub finals: Vec<Vec<f64>>,
    pub differences: Vec<f64>,
    pub observed_order: Option<f64>,
}

/// Solve on the driver coarsened by `1, 2, 4, ...` (`levels` solves) and
/// compare consecutive final states.
pub fn self_convergence<F: VectorFields + ?Sized>(
    f: &F,
    driver: &RoughPath,
    x0: &[f64],
    levels: usize,
) -> Result<DyadicStudy> {
    let mut factors = Vec::new();
    let mut meshes = Vec::new();
    let mut finals = Vec::new();
    for l in 0..levels {
        let factor = 1usize << l;
        if factor > driver.steps() {
            break;
        }
        let coarse = driver.coarsened(factor);
        meshes.push(coarse.grid().max_step());
        finals.push(solve_rde(f, &coarse, x0)?.final_state().to_vec());
        factors.push(factor);
    }
    let differences: Vec<f64> = finals
        .windows(2)
        .map(|w| {
            let d: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| a - b).collect();
            norm(&d)
        })
        .collect();
    let observed_order = fit_order(&meshes[..differences.len()], &differences);
    Ok(DyadicStudy {
        factors,
        meshes,
        finals,
        differences,
        observed_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rde::fields::ExprFields;
    use crate::rng::Stream;
    use crate::roughpath::{brownian_lift, lift_piecewise_linear, pure_area};

    fn linear_driver(n: usize) -> RoughPath {
        let grid = Grid::uniform(1.0, n).unwrap();
        let s: Vec<Vec<f64>> = grid.times().iter().map(|&t| vec![t]).collect();
        lift_piecewise_linear(&grid, &s, 0.5).unwrap().into_inner()
    }

    #[test]
    fn zero_fields_keep_state() {
        let f = ExprFields::parse(2, &[vec!["0", "0"]], &["0", "0"], 3).unwrap();
        let grid = Grid::uniform(1.0, 32).unwrap();
        let w = brownian_lift(&mut Stream::new(0, 0), &grid, 1, 0.45, 4).unwrap();
        let p = solve_rde(&f, &w, &[1.5, -2.0]).unwrap();
        assert_eq!(p.final_state(), &[1.5, -2.0]);
    }

    #[test]
    fn scalar_linear_gives_e() {
        let f = ExprFields::parse(1, &[vec!["x"]], &["0"], 3).unwrap();
        let p = solve_rde(&f, &linear_driver(1024), &[1.0]).unwrap();
        assert!((p.final_state()[0] - std::f64::consts::E).abs() < 1e-4);
        let lin = LinearFields::homogeneous(1, vec![vec![1.0]]).unwrap();
        let q = solve_linear_rde(&lin, &linear_driver(1024), &[1.0]).unwrap();
        for k in [256, 512, 1024] {
            let t = k as f64 / 1024.0;
            assert!((q.state(k)[0] - t.exp()).abs() < 1e-4 * t.exp());
        }
    }

    #[test]
    fn zero_linear_is_constant() {
        let lin = LinearFields::homogeneous(2, vec![vec![0.0; 4]]).unwrap();
        let p = solve_linear_rde(&lin, &linear_driver(16), &[0.3, 0.4]).unwrap();
        assert_eq!(p.final_state(), &[0.3, 0.4]);
    }

    #[test]
    fn nan_guard_names_step() {
        let f = ExprFields::parse(1, &[vec!["x^2"]], &["0"], 3).unwrap();
        let grid = Grid::uniform(1.0, 8).unwrap();
        let s: Vec<Vec<f64>> = grid.times().iter().map(|&t| vec![1e200 * t]).collect();
        let w = lift_piecewise_linear(&grid, &s, 0.5).unwrap();
        match solve_rde(&f, &w, &[1.0]) {
            Err(Error::NonFinite { step, .. }) => assert!(step < 8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pure_area_rotation() {
        // V_1 = A_1 x, V_2 = A_2 x driven by the area ρ(t-s)[[0,1],[-1,0]]:
        // X_t = exp(ρ t M) x0 with M = A_2A_1 - A_1A_2.
        let a1 = [1.0, 0.0, 0.0, -1.0];
        let a2 = [0.0, 1.0, 1.0, 0.0];
        let lin = LinearFields::homogeneous(2, vec![a1.to_vec(), a2.to_vec()]).unwrap();
        let rate = 0.5;
        let mut m = [0.0; 4];
        let mut p = [0.0; 4];
        let mut q = [0.0; 4];
        crate::rde::fields::matmul(&a2, &a1, 2, &mut p);
        crate::rde::fields::matmul(&a1, &a2, 2, &mut q);
        for i in 0..4 {
            m[i] = p[i] - q[i];
        }
        // M = [[0,-2],[2,0]] is a rotation generator: exp(θM) with θ = ρt
        assert_eq!(m, [0.0, -2.0, 2.0, 0.0]);
        let n = 4096;
        let grid = Grid::uniform(1.0, n).unwrap();
        let w = pure_area(&grid, rate, 0.5).unwrap();
        let x0 = [1.0, 0.0];
        let sol = solve_rde(&lin, &w, &x0).unwrap();
        let ang = 2.0 * rate;
        let exact = [ang.cos(), ang.sin()];
        let got = sol.final_state();
        assert!((got[0] - exact[0]).abs() < 1e-3 && (got[1] - exact[1]).abs() < 1e-3, "{got:?} vs {exact:?}");
    }

    #[test]
    fn brownian_self_convergence() {
        let f = ExprFields::parse(1, &[vec!["sin(x)"], vec!["cos(x)"]], &["0"], 3).unwrap();
        let grid = Grid::uniform(1.0, 1 << 12).unwrap();
        let w = brownian_lift(&mut Stream::new(5, 0), &grid, 2, 0.45, 8).unwrap();
        let s = self_convergence(&f, &w, &[0.2], 6).unwrap();
        let order = s.observed_order.unwrap();
        assert!(order >= (3.0 * 0.45 - 1.0f64).min(1.0) - 0.1, "order {order}");
    }
}
