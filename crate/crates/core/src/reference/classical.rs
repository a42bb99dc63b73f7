use serde::{Deserialize, Serialize};

use super::driver::SmoothDriver;
use crate::error::{ensure_dim, Error, Result};
use crate::expr::Expr;
use crate::feynman_kac::{backward_value, map_chunks, pairwise_merge, Estimate, LogAccumulator, McParams, OperatorCoefficients};
use crate::rde::VectorFields;
use crate::rng::{NormalSource, StreamFamily};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FkScheme {
    /// `X += (b + βẆ)Δt + σΔB`, weight `exp(Σ (c + γ·Ẇ)Δt)`.
    #[default]
    EulerMaruyama,
    /// The rough solver on the canonical lift of the smooth driver.
    Davie,
}

/// Tag of the stream family used by the Euler–Maruyama scheme.
const EM_TAG: u64 = 2;

/// `u(t,x) = E^{t,x}[g(X_T) exp(∫c dr + ∫γ(X)·Ẇ dr)]` for a `C¹` driver.
pub fn classical_fk(
    coeffs: &OperatorCoefficients,
    g: &Expr,
    t: f64,
    x: &[f64],
    driver: &SmoothDriver,
    mc: &McParams,
    scheme: FkScheme,
) -> Result<Estimate> {
    ensure_dim(coeffs.dim(), x.len())?;
    ensure_dim(coeffs.rough_dim(), driver.dim())?;
    if scheme == FkScheme::Davie {
        let lift = driver.canonical_lift(0.5)?;
        return backward_value(coeffs, g, t, x, &lift, mc);
    }
    mc.validate()?;
    let cc = coeffs.compile_active()?;
    let grid = driver.grid();
    let start = grid.index_of(t)?;
    let n = grid.steps();
    let (d, m, e) = (cc.state_dim(), cc.brownian_dim(), cc.rough_dim());
    let gc = g.compile();
    let family = StreamFamily::new(mc.seed).split(EM_TAG);
    let particles = if m == 0 { 1 } else { mc.particles };
    let rates = driver.rates();
    let chunks = map_chunks(particles, |range| {
        let mut acc = LogAccumulator::default();
        let mut v = vec![0.0; (m + e) * d];
        let mut drift = vec![0.0; d];
        let mut gamma = vec![0.0; e];
        let mut db = vec![0.0; m];
        let mut state = vec![0.0; d];
        for i in range {
            let mut stream = family.stream(i as u64);
            state.copy_from_slice(x);
            let mut lw = 0.0;
            for k in start..n {
                let dt = grid.dt(k);
                let r = &rates[k * e..(k + 1) * e];
                cc.fields(&state, &mut v);
                cc.drift(&state, &mut drift);
                cc.gamma_at(&state, &mut gamma);
                lw += cc.c_at(&state) * dt;
                for j in 0..e {
                    lw += gamma[j] * r[j] * dt;
                }
                stream.fill_normals(&mut db);
                let sq = dt.sqrt();
                for l in 0..d {
                    let mut dx = drift[l] * dt;
                    for a in 0..m {
                        dx += v[a * d + l] * db[a] * sq;
                    }
                    for j in 0..e {
                        dx += v[(m + j) * d + l] * r[j] * dt;
                    }
                    state[l] += dx;
                }
                if !state.iter().all(|s| s.is_finite()) {
                    return Err(Error::NonFinite {
                        step: k,
                        time: grid.time(k + 1),
                    });
                }
            }
            acc.push(gc.eval(&state, 0.0), lw);
        }
        Ok(acc)
    })?;
    pairwise_merge(&chunks).finish(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_datum() {
        let c = OperatorCoefficients::parse(1, &[vec!["1"]], &["0"], "0", &[vec!["0.3"]], &["0"]).unwrap();
        let w = SmoothDriver::parse(&["sin(t)"], 1.0, 32).unwrap();
        let est = classical_fk(&c, &Expr::constant(1.0), 0.0, &[0.2], &w, &McParams::new(100, 1), FkScheme::EulerMaruyama)
            .unwrap();
        assert_eq!(est.mean, 1.0);
    }

    #[test]
    fn euler_agrees_with_davie_on_smooth_driver() {
        let c = OperatorCoefficients::parse(1, &[vec!["0.5"]], &["-0.3*x"], "0", &[vec!["0.4*cos(x)"]], &["0.2"])
            .unwrap();
        let w = SmoothDriver::parse(&["sin(2*t)"], 1.0, 256).unwrap();
        let g = Expr::parse("cos(x)").unwrap();
        let mc = McParams::new(4000, 4);
        let em = classical_fk(&c, &g, 0.0, &[0.3], &w, &mc, FkScheme::EulerMaruyama).unwrap();
        let dv = classical_fk(&c, &g, 0.0, &[0.3], &w, &mc, FkScheme::Davie).unwrap();
        let tol = 3.0 * (em.std_error.powi(2) + dv.std_error.powi(2)).sqrt() + 0.01;
        assert!((em.mean - dv.mean).abs() < tol, "{em:?} {dv:?}");
    }
}
