use super::backward::{backward_estimates, driver_id, BackwardField, Provenance, SpaceGrid};
use super::coefficients::{CoefficientSmoothness, OperatorCoefficients};
use super::estimate::McParams;
use crate::error::{ensure_dim, Error, Result};
use crate::expr::{Compiled, Expr};
use crate::roughpath::RoughPath;

/// Number of radii in a decay scan.
pub const DECAY_RADII: usize = 64;

/// A function in `C^n_exp`: `|D^kφ(x)| <= c·exp(-|x|/c)` for `k <= n`.
#[derive(Clone, Debug)]
pub struct ExpDecayFunction {
    expr: Expr,
    dim: usize,
    order: u8,
    c: f64,
    value: Compiled,
    partials: Vec<Compiled>,
}

/// All partial derivatives of order `1..=order`, each multi-index once.
fn partials(expr: &Expr, dim: usize, order: u8) -> Result<Vec<Expr>> {
    let mut out = Vec::new();
    let mut level: Vec<(usize, Expr)> = vec![(0, expr.clone())];
    for _ in 0..order {
        let mut next = Vec::new();
        for (lowest, e) in &level {
            for i in *lowest..dim {
                next.push((i, e.diff_var(i)?));
            }
        }
        out.extend(next.iter().map(|(_, e)| e.clone()));
        level = next;
    }
    Ok(out)
}

/// Scan directions: `±e_1` in one dimension, 16 unit vectors in the plane,
/// coordinate axes and the two main diagonals otherwise.
fn directions(dim: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..16)
            .map(|k| {
                let a = std::f64::consts::PI * k as f64 / 8.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut v = Vec::new();
            for i in 0..dim {
                for s in [1.0, -1.0] {
                    let mut e = vec![0.0; dim];
                    e[i] = s;
                    v.push(e);
                }
            }
            let r = 1.0 / (dim as f64).sqrt();
            v.push(vec![r; dim]);
            v.push(vec![-r; dim]);
            v
        }
    }
}

/// Smallest `c` in `(0, c_max]` with `bound <= c·exp(-r/c)` at every
/// `(r, bound)` sample, found by bisection (the right-hand side grows with
/// `c`). `None` if even `c_max` fails.
pub fn fit_decay_constant(samples: &[(f64, f64)], c_max: f64) -> Option<f64> {
    let feasible = |c: f64| samples.iter().all(|(r, b)| *b <= c * (-r / c).exp() * (1.0 + 1e-12));
    if !feasible(c_max) {
        return None;
    }
    let (mut lo, mut hi) = (0.0, c_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 || mid == lo || mid == hi {
            break;
        }
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

impl ExpDecayFunction {
    pub fn new(expr: Expr, dim: usize, order: u8, c: f64) -> Result<ExpDecayFunction> {
        if !(c > 0.0) {
            return Err(Error::Config {
                field: "decay constant".into(),
                msg: format!("must be positive, got {c}"),
            });
        }
        if let Some(i) = expr.max_var() {
            if i >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: i + 1,
                });
            }
        }
        let partials = partials(&expr, dim, order)?.iter().map(|e| e.compile()).collect();
        Ok(ExpDecayFunction {
            value: expr.compile(),
            expr,
            dim,
            order,
            c,
            partials,
        })
    }

    pub fn parse(src: &str, dim: usize, order: u8, c: f64) -> Result<ExpDecayFunction> {
        ExpDecayFunction::new(Expr::parse(src)?, dim, order, c)
    }

    /// Build with the decay constant fitted on `[-half_width, half_width]^d`
    /// with `c_max = half_width / 3`.
    pub fn fitted(expr: Expr, dim: usize, order: u8, half_width: f64) -> Result<ExpDecayFunction> {
        let mut f = ExpDecayFunction::new(expr, dim, order, 1.0)?;
        let c = f.fit_constant(half_width, half_width / 3.0).ok_or_else(|| Error::Config {
            field: "decay".into(),
            msg: format!("`{}` shows no exponential decay on the box", f.expr),
        })?;
        f.c = c;
        Ok(f)
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.value.eval(x, 0.0)
    }

    /// `max_{|α| <= n} |∂^α φ(x)|`.
    pub fn derivative_bound(&self, x: &[f64]) -> f64 {
        self.partials
            .iter()
            .map(|p| p.eval(x, 0.0).abs())
            .fold(self.eval(x).abs(), f64::max)
    }

    /// `(r, max over directions of derivative_bound(r·u))` at
    /// [`DECAY_RADII`] radii in `[0, half_width]`.
    pub fn scan(&self, half_width: f64) -> Vec<(f64, f64)> {
        let dirs = directions(self.dim);
        (0..DECAY_RADII)
            .map(|i| {
                let r = half_width * i as f64 / (DECAY_RADII - 1) as f64;
                let b = dirs
                    .iter()
                    .map(|u| {
                        let x: Vec<f64> = u.iter().map(|v| v * r).collect();
                        self.derivative_bound(&x)
                    })
                    .fold(0.0, f64::max);
                (r, b)
            })
            .collect()
    }

    pub fn check_decay(&self, half_width: f64) -> bool {
        let c = self.c;
        self.scan(half_width)
            .iter()
            .all(|(r, b)| *b <= c * (-r / c).exp() * (1.0 + 1e-12))
    }

    pub fn fit_constant(&self, half_width: f64, c_max: f64) -> Option<f64> {
        fit_decay_constant(&self.scan(half_width), c_max)
    }

    /// Upper bound for `∫ c·e^{-|x|/c} dx` over the complement of the
    /// ball of radius `half_width`, which contains the complement of the box.
    pub fn tail_bound(&self, half_width: f64) -> f64 {
        exp_tail(self.dim, self.c, half_width)
    }
}

/// `∫_{|x| > r} c·e^{-|x|/c} dx` in `R^d`.
pub fn exp_tail(dim: usize, c: f64, r: f64) -> f64 {
    // surface area of the unit sphere in R^d
    let mut area = if dim % 2 == 1 { 2.0 } else { 2.0 * std::f64::consts::PI };
    let mut k = if dim % 2 == 1 { 1 } else { 2 };
    while k < dim {
        area *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    // ∫_r^∞ s^n e^{-s/c} ds = e^{-r/c} Σ_j n!/(n-j)! r^{n-j} c^{j+1}
    let n = dim - 1;
    let mut sum = 0.0;
    let mut falling = 1.0;
    for j in 0..=n {
        if j > 0 {
            falling *= (n + 1 - j) as f64;
        }
        sum += falling * r.powi((n - j) as i32) * c.powi(j as i32 + 1);
    }
    area * c * (-r / c).exp() * sum
}

pub(crate) fn density_smoothness() -> CoefficientSmoothness {
    CoefficientSmoothness {
        sigma: 6,
        b: 5,
        c: 4,
        beta: 7,
        gamma: 6,
    }
}

/// Density `p_t(x) = E[p_0(X̃_t) exp(∫c̃ + ∫γ̃ d𝐖̄)]` of the forward solution,
/// computed as a backward solve with the adjoint coefficients against the
/// time-reversed driver `𝐖̄_s = W_{t-s, t}` for each recorded `t`.
pub fn forward_density(
    coeffs: &OperatorCoefficients,
    p0: &ExpDecayFunction,
    driver: &RoughPath,
    time_indices: &[usize],
    space: &SpaceGrid,
    mc: &McParams,
) -> Result<BackwardField> {
    ensure_dim(coeffs.dim(), space.dim())?;
    ensure_dim(coeffs.dim(), p0.dim())?;
    coeffs.check_smoothness(&density_smoothness(), "forward_density");
    if p0.order() < 4 {
        log::warn!("forward_density: initial density is only declared C^{}_exp", p0.order());
    }
    let adj = coeffs.adjoint()?.compile_active()?;
    let points = space.points();
    let mut values = Vec::with_capacity(time_indices.len());
    let mut std_errors = Vec::with_capacity(time_indices.len());
    for &k in time_indices {
        if k == 0 {
            values.push(points.iter().map(|x| p0.eval(x)).collect());
            std_errors.push(vec![0.0; points.len()]);
            continue;
        }
        let reversed = driver.adjoint_reversal(k)?;
        let est = backward_estimates(&adj, &p0.value, &reversed, mc, &[0], &points)?;
        values.push(est[0].iter().map(|e| e.mean).collect());
        std_errors.push(est[0].iter().map(|e| e.std_error).collect());
    }
    Ok(BackwardField {
        time_indices: time_indices.to_vec(),
        times: time_indices.iter().map(|&k| driver.grid().time(k)).collect(),
        space: space.clone(),
        values,
        std_errors,
        datum: p0.expr().to_string(),
        provenance: Provenance {
            particles: if adj.brownian_dim() == 0 { 1 } else { mc.particles },
            seed: mc.seed,
            subgrid: mc.subgrid,
            driver_id: driver_id(driver),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feynman_kac::{forward_measure, InitialMeasure};
    use crate::rng::Stream;
    use crate::roughpath::{brownian_lift, Grid};

    fn brownian(n: usize, seed: u64) -> RoughPath {
        let grid = Grid::uniform(1.0, n).unwrap();
        brownian_lift(&mut Stream::new(seed, 0), &grid, 1, 0.45, 8).unwrap().into_inner()
    }

    #[test]
    fn exponential_has_constant_one() {
        let f = ExpDecayFunction::parse("exp(-sqrt(x^2))", 1, 0, 1.0).unwrap();
        assert!(f.check_decay(10.0));
        let c = f.fit_constant(10.0, 10.0 / 3.0).unwrap();
        assert!((c - 1.0).abs() < 1e-6, "{c}");
    }

    #[test]
    fn tail_integrals() {
        assert!((exp_tail(1, 1.0, 3.0) - 2.0 * (-3.0f64).exp()).abs() < 1e-15);
        let two = 2.0 * std::f64::consts::PI * 2.0 * (2.0 * 5.0 + 4.0) * (-2.5f64).exp();
        assert!((exp_tail(2, 2.0, 5.0) - two).abs() < 1e-12);
        // d = 3: 4π c ∫_r^∞ s² e^{-s/c} ds
        let three = 4.0 * std::f64::consts::PI * (-1.0f64).exp() * (1.0 + 2.0 + 2.0);
        assert!((exp_tail(3, 1.0, 1.0) - three).abs() < 1e-12);
    }

    #[test]
    fn constant_has_no_decay() {
        let f = ExpDecayFunction::parse("0.5", 1, 3, 1.0).unwrap();
        assert!(f.fit_constant(10.0, 10.0 / 3.0).is_none());
    }

    #[test]
    fn smooth_bump_in_the_class() {
        let f = ExpDecayFunction::fitted(Expr::parse("exp(-sqrt(1 + x0^2 + x1^2))").unwrap(), 2, 4, 12.0).unwrap();
        assert!(f.check_decay(12.0));
        assert!(f.constant() < 4.0);
    }

    #[test]
    fn density_without_coefficients_is_constant_in_time() {
        let c = OperatorCoefficients::parse(1, &[], &["0"], "0", &[vec!["0"]], &["0"]).unwrap();
        let p0 = ExpDecayFunction::parse("exp(-x^2)", 1, 4, 1.5).unwrap();
        let w = brownian(16, 2);
        let space = SpaceGrid::uniform(1, 4.0, 9).unwrap();
        let p = forward_density(&c, &p0, &w, &[0, 8, 16], &space, &McParams::new(10, 1)).unwrap();
        for r in 0..3 {
            for (j, x) in space.points().iter().enumerate() {
                assert_eq!(p.values[r][j], (-x[0] * x[0]).exp());
            }
        }
    }

    #[test]
    fn density_is_transported() {
        let c = OperatorCoefficients::parse(1, &[], &["0"], "0", &[vec!["0.9"]], &["0"]).unwrap();
        let p0 = ExpDecayFunction::parse("exp(-x^2)", 1, 4, 1.5).unwrap();
        let w = brownian(32, 6);
        let space = SpaceGrid::uniform(1, 3.0, 7).unwrap();
        let p = forward_density(&c, &p0, &w, &[10, 32], &space, &McParams::new(10, 1)).unwrap();
        for (r, &k) in [10usize, 32].iter().enumerate() {
            let shift = 0.9 * w.increment(0, k).first[0];
            for (j, x) in space.points().iter().enumerate() {
                let y = x[0] - shift;
                assert!((p.values[r][j] - (-y * y).exp()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn density_mass_matches_particles() {
        let c = OperatorCoefficients::parse(1, &[vec!["0.6"]], &["-0.3*x"], "0", &[vec!["0.4"]], &["0"]).unwrap();
        let p0_src = "exp(-x^2/2)/sqrt(2*pi)";
        let p0 = ExpDecayFunction::parse(p0_src, 1, 4, 1.5).unwrap();
        let w = brownian(16, 4);
        let space = SpaceGrid::uniform(1, 7.0, 57).unwrap();
        let mc = McParams::new(2000, 3);
        let p = forward_density(&c, &p0, &w, &[16], &space, &mc).unwrap();
        let weights = space.trapezoid_weights();
        let mass: f64 = p.values[0].iter().zip(&weights).map(|(a, b)| a * b).sum();
        let se: f64 = p.std_errors[0].iter().zip(&weights).map(|(a, b)| a * b).sum();
        let nu = InitialMeasure::Gaussian {
            mean: vec![0.0],
            std: 1.0,
            mass: 1.0,
        };
        let rho = forward_measure(&c, &nu, &w, &mc, &[16]).unwrap();
        let m = rho.total_mass(0).unwrap();
        assert!((mass - m.mean).abs() <= 3.0 * (se + m.std_error) + 1e-3, "{mass} vs {m:?}");
    }
}
