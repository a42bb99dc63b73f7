use std::sync::Arc;

use nalgebra::DMatrix;

use super::fields::{Augmented, Reversed, VectorFields};
use super::solver::{integrate_range, warn_smoothness, DavieWorkspace};
use crate::controlled::ControlledPath;
use crate::error::{ensure_dim, Error, Result};
use crate::roughpath::RoughPath;

/// Flow of an RDE sampled at a set of initial points.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSample {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    /// `Φ_{0,T}(x)` per point.
    pub forward: Vec<Vec<f64>>,
    /// `DΦ_{0,T}(x)`, row-major `d×d` per point.
    pub jacobian: Vec<Vec<f64>>,
    /// `Ψ^{-1}(Φ_{0,T}(x))`, the reversed-driver solve started at the image.
    pub roundtrip: Vec<Vec<f64>>,
    /// `DΨ^{-1}` at `Φ_{0,T}(x)`.
    pub inverse_jacobian: Vec<Vec<f64>>,
    pub det: Vec<f64>,
}

impl FlowSample {
    pub fn roundtrip_error(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.roundtrip)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

fn identity(d: usize) -> Vec<f64> {
    let mut j = vec![0.0; d * d];
    for i in 0..d {
        j[i * d + i] = 1.0;
    }
    j
}

/// `(Φ_{s,t}(x), DΦ_{s,t}(x))` between grid indices via the augmented system.
pub fn flow_with_jacobian<F: VectorFields + ?Sized>(
    fields: &F,
    driver: &RoughPath,
    start: usize,
    end: usize,
    x: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = fields.state_dim();
    ensure_dim(d, x.len())?;
    let aug = Augmented(fields);
    let mut z = x.to_vec();
    z.extend(identity(d));
    let mut ws = DavieWorkspace::for_fields(&aug);
    integrate_range(&aug, driver, start, end, &mut z, &mut ws, |_, _| {})?;
    let jac = z.split_off(d);
    Ok((z, jac))
}

/// `Φ_{s,t}(x)` between grid indices.
pub fn flow_map<F: VectorFields + ?Sized>(
    fields: &F,
    driver: &RoughPath,
    start: usize,
    end: usize,
    x: &[f64],
) -> Result<Vec<f64>> {
    ensure_dim(fields.state_dim(), x.len())?;
    let mut z = x.to_vec();
    let mut ws = DavieWorkspace::for_fields(fields);
    integrate_range(fields, driver, start, end, &mut z, &mut ws, |_, _| {})?;
    Ok(z)
}

pub fn determinant(m: &[f64], d: usize) -> f64 {
    DMatrix::from_row_slice(d, d, m).determinant()
}

/// Forward flow with Jacobian, and the inverse flow obtained by solving
/// against the time-reversed driver with negated drift.
pub fn solve_flow<F: VectorFields + ?Sized>(
    fields: &F,
    driver: &RoughPath,
    points: &[Vec<f64>],
) -> Result<FlowSample> {
    ensure_dim(fields.driver_dim(), driver.dim())?;
    warn_smoothness(fields, 3, "solve_flow");
    let d = fields.state_dim();
    let n = driver.steps();
    let reversed = driver.reversed();
    let back = Reversed(fields);
    let mut sample = FlowSample {
        dim: d,
        points: points.to_vec(),
        forward: Vec::new(),
        jacobian: Vec::new(),
        roundtrip: Vec::new(),
        inverse_jacobian: Vec::new(),
        det: Vec::new(),
    };
    for (p, x) in points.iter().enumerate() {
        let (phi, jac) = flow_with_jacobian(fields, driver, 0, n, x)?;
        let det = determinant(&jac, d);
        if det == 0.0 || !det.is_finite() {
            return Err(Error::SingularJacobian { point: p, det });
        }
        let (psi, ijac) = flow_with_jacobian(&back, &reversed, 0, n, &phi)?;
        sample.forward.push(phi);
        sample.jacobian.push(jac);
        sample.roundtrip.push(psi);
        sample.inverse_jacobian.push(ijac);
        sample.det.push(det);
    }
    Ok(sample)
}

/// Determinant of `DΦ_{0,t}(x)` along a trajectory, two ways.
#[derive(Clone, Debug, PartialEq)]
pub struct DeterminantPath {
    /// `det` of the augmented-system Jacobian.
    pub direct: Vec<f64>,
    /// `exp(∫ div V_k(X) dW^k + ∫ div b(X) dr)`, rough integral along `X`.
    pub liouville: Vec<f64>,
}

impl DeterminantPath {
    pub fn max_relative_gap(&self) -> f64 {
        self.direct
            .iter()
            .zip(&self.liouville)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1e-300))
            .fold(0.0, f64::max)
    }
}

/// Liouville's formula along the solution from `x0`, checked against the
/// determinant of the augmented Jacobian at every grid point.
pub fn det_jacobian<F: VectorFields + ?Sized>(fields: &F, driver: &RoughPath, x0: &[f64]) -> Result<DeterminantPath> {
    let d = fields.state_dim();
    let e = fields.driver_dim();
    ensure_dim(d, x0.len())?;
    ensure_dim(e, driver.dim())?;
    let n = driver.steps();
    let aug = Augmented(fields);
    let mut z = x0.to_vec();
    z.extend(identity(d));
    let mut states = x0.to_vec();
    let mut direct = vec![1.0];
    let mut ws = DavieWorkspace::for_fields(&aug);
    let mut singular = None;
    integrate_range(&aug, driver, 0, n, &mut z, &mut ws, |k, z| {
        states.extend_from_slice(&z[..d]);
        let det = determinant(&z[d..], d);
        if (det == 0.0 || !det.is_finite()) && singular.is_none() {
            singular = Some((k, det));
        }
        direct.push(det);
    })?;
    if let Some((k, det)) = singular {
        return Err(Error::SingularJacobian { point: k, det });
    }

    // Y_k = (div V_1, ..., div V_e)(X), Y′[(0,j), a] = ∇ div V_j · V_a
    let mut values = Vec::with_capacity((n + 1) * e);
    let mut derivs = Vec::with_capacity((n + 1) * e * e);
    let mut drift_div = Vec::with_capacity(n + 1);
    let mut v = vec![0.0; e * d];
    let mut dv = vec![0.0; e * d * d];
    let mut h = vec![0.0; e * d * d * d];
    let mut db = vec![0.0; d * d];
    for k in 0..=n {
        let x = &states[k * d..(k + 1) * d];
        fields.fields(x, &mut v);
        fields.field_jacobians(x, &mut dv);
        fields.field_hessians(x, &mut h);
        for j in 0..e {
            values.push((0..d).map(|i| dv[(j * d + i) * d + i]).sum::<f64>());
        }
        for j in 0..e {
            let grad: Vec<f64> = (0..d)
                .map(|l| (0..d).map(|i| h[((j * d + i) * d + i) * d + l]).sum())
                .collect();
            for a in 0..e {
                derivs.push((0..d).map(|l| grad[l] * v[a * d + l]).sum());
            }
        }
        fields.drift_jacobian(x, &mut db);
        drift_div.push((0..d).map(|i| db[i * d + i]).sum::<f64>());
    }
    let y = ControlledPath::new(Arc::new(driver.clone()), (1, e), values, derivs)?;
    let rough = y.integral_path()?;
    let grid = driver.grid();
    let mut liouville = Vec::with_capacity(n + 1);
    let mut time_part = 0.0;
    liouville.push(1.0);
    for k in 0..n {
        time_part += 0.5 * (drift_div[k] + drift_div[k + 1]) * grid.dt(k);
        liouville.push((rough[k + 1] + time_part).exp());
    }
    Ok(DeterminantPath { direct, liouville })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::rde::fields::{ExprFields, LinearFields};
    use crate::roughpath::{lift_piecewise_linear, Grid};

    fn smooth_driver(n: usize) -> RoughPath {
        let grid = Grid::uniform(1.0, n).unwrap();
        let s: Vec<Vec<f64>> = grid
            .times()
            .iter()
            .map(|&t| vec![(3.0 * t).sin(), t * t - 0.5 * t])
            .collect();
        lift_piecewise_linear(&grid, &s, 0.5).unwrap().into_inner()
    }

    fn line(n: usize) -> RoughPath {
        let grid = Grid::uniform(1.0, n).unwrap();
        let s: Vec<Vec<f64>> = grid.times().iter().map(|&t| vec![t]).collect();
        lift_piecewise_linear(&grid, &s, 0.5).unwrap().into_inner()
    }

    #[test]
    fn zero_fields_identity_flow() {
        let f = ExprFields::parse(2, &[vec!["0", "0"], vec!["0", "0"]], &["0", "0"], 3).unwrap();
        let s = solve_flow(&f, &smooth_driver(64), &[vec![0.5, -1.0]]).unwrap();
        assert_eq!(s.forward[0], vec![0.5, -1.0]);
        assert_eq!(s.jacobian[0], vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(s.det[0], 1.0);
    }

    #[test]
    fn scalar_linear_jacobian() {
        let f = ExprFields::parse(1, &[vec!["x"]], &["0"], 3).unwrap();
        let w = line(1024);
        let s = solve_flow(&f, &w, &[vec![0.3]]).unwrap();
        assert!((s.jacobian[0][0] - 1f64.exp()).abs() < 1e-4);
        let dp = det_jacobian(&f, &w, &[0.3]).unwrap();
        for k in [0, 512, 1024] {
            let t = k as f64 / 1024.0;
            assert!((dp.liouville[k] - t.exp()).abs() < 1e-12);
            assert!((dp.direct[k] - t.exp()).abs() < 1e-4);
        }
    }

    #[test]
    fn trace_free_determinant_is_one() {
        let lin = LinearFields::homogeneous(2, vec![vec![0.0, 1.0, -1.0, 0.0], vec![0.0, -0.5, 0.5, 0.0]]).unwrap();
        let dp = det_jacobian(&lin, &smooth_driver(256), &[1.0, 2.0]).unwrap();
        assert!(dp.liouville.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn liouville_matches_augmented_determinant() {
        let f = ExprFields::parse(
            2,
            &[vec!["sin(x1)", "0.5*cos(x0)"], vec!["0.3*x0*exp(-x1^2)", "tanh(x0)"]],
            &["0", "0"],
            3,
        )
        .unwrap();
        let dp = det_jacobian(&f, &smooth_driver(4096), &[0.2, -0.4]).unwrap();
        assert!(dp.max_relative_gap() < 1e-6, "{}", dp.max_relative_gap());
    }

    #[test]
    fn inverse_flow_roundtrip() {
        let f = ExprFields::parse(
            2,
            &[vec!["sin(x1)", "0.5*cos(x0)"], vec!["0.3*x0*exp(-x1^2)", "tanh(x0)"]],
            &["0", "0"],
            3,
        )
        .unwrap();
        let pts = vec![vec![0.0, 0.0], vec![1.0, -0.5], vec![-0.7, 0.9]];
        let s = solve_flow(&f, &smooth_driver(2048), &pts).unwrap();
        assert!(s.roundtrip_error() < 1e-6, "{}", s.roundtrip_error());

        for (j, ij) in s.jacobian.iter().zip(&s.inverse_jacobian) {
            let mut p = [0.0; 4];
            crate::rde::fields::matmul(ij, j, 2, &mut p);
            assert!((p[0] - 1.0).abs() < 1e-5 && p[1].abs() < 1e-5 && p[2].abs() < 1e-5 && (p[3] - 1.0).abs() < 1e-5);
        }

        // the drift enters at first order only
        let g = ExprFields::new(2, f.source().to_vec(), vec![Expr::parse("0.2*sin(x0)").unwrap(), Expr::parse("-0.1*x1").unwrap()], 3).unwrap();
        let s = solve_flow(&g, &smooth_driver(2048), &pts).unwrap();
        assert!(s.roundtrip_error() < 1e-4, "{}", s.roundtrip_error());
    }

    #[test]
    fn flow_composition() {
        let f = ExprFields::parse(1, &[vec!["sin(x)"], vec!["cos(x)"]], &["0"], 3).unwrap();
        let w = smooth_driver(256);
        let x = [0.4];
        let direct = flow_map(&f, &w, 0, 256, &x).unwrap();
        let mid = flow_map(&f, &w, 0, 100, &x).unwrap();
        let composed = flow_map(&f, &w, 100, 256, &mid).unwrap();
        assert!((direct[0] - composed[0]).abs() < 1e-15);
    }
}
