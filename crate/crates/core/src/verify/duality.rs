use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::feynman_kac::{BackwardField, ParticleMeasure};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub time_indices: Vec<usize>,
    pub times: Vec<f64>,
    /// `ρ_t(u_t)` at each common record.
    pub pairings: Vec<f64>,
    /// `|ρ_t(u_t) - ρ_0(u_0)|`.
    pub gaps: Vec<f64>,
    /// Combined standard error of each gap.
    pub std_errors: Vec<f64>,
    pub sup_gap: f64,
    /// Largest `gap / std_error` (0 when both vanish).
    pub sup_ratio: f64,
    /// Particle positions that fell outside the field's space box.
    pub extrapolated: usize,
}

impl DualityReport {
    /// `gap <= k·std_error + slack` at every record.
    pub fn within(&self, k: f64, slack: f64) -> bool {
        self.gaps.iter().zip(&self.std_errors).all(|(g, s)| *g <= k * s + slack)
    }
}

/// `sup_t |ρ_t(u_t) - ρ_0(u_0)|` over the records shared by `u` and `ρ`,
/// the first shared record playing the role of time 0.
///
/// The standard error combines the particle spread of
/// `w_t^i u_t(X_t^i) - u_0(X_0^i)` with the field errors paired against `ρ`.
pub fn check_duality(u: &BackwardField, rho: &ParticleMeasure) -> Result<DualityReport> {
    ensure_dim(u.space.dim(), rho.dim)?;
    let common: Vec<(usize, usize, usize)> = rho
        .time_indices
        .iter()
        .enumerate()
        .filter_map(|(rr, k)| u.record_of(*k).map(|ru| (*k, rr, ru)))
        .collect();
    if common.is_empty() {
        return Err(Error::TooFewSamples(0));
    }
    let n = rho.particles();
    let scale = rho.mass / n as f64;
    let mut extrapolated = 0;
    let mut terms = Vec::with_capacity(common.len());
    let mut field_se = Vec::with_capacity(common.len());
    for &(_, rr, ru) in &common {
        let mut v = Vec::with_capacity(n);
        let mut se = 0.0;
        for i in 0..n {
            let x = rho.position(rr, i);
            if !u.space.contains(x) {
                extrapolated += 1;
            }
            let w = rho.log_weights[rr][i].exp();
            if !w.is_finite() {
                return Err(Error::WeightOverflow(rho.log_weights[rr][i]));
            }
            v.push(w * u.interpolate(ru, x));
            se += w * u.interpolate_std_error(ru, x);
        }
        terms.push(v);
        field_se.push(se * scale);
    }
    if extrapolated > 0 {
        log::warn!("duality pairing extrapolated the field at {extrapolated} particle positions");
    }
    let mut report = DualityReport {
        time_indices: common.iter().map(|c| c.0).collect(),
        times: common.iter().map(|c| rho.times[c.1]).collect(),
        pairings: terms.iter().map(|v| v.iter().sum::<f64>() * scale).collect(),
        gaps: Vec::new(),
        std_errors: Vec::new(),
        sup_gap: 0.0,
        sup_ratio: 0.0,
        extrapolated,
    };
    for (r, v) in terms.iter().enumerate() {
        let diff: Vec<f64> = v.iter().zip(&terms[0]).map(|(a, b)| a - b).collect();
        let mean = diff.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let sample_se = rho.mass * (var / n as f64).sqrt();
        let se = if r == 0 {
            0.0
        } else {
            (sample_se.powi(2) + field_se[r].powi(2) + field_se[0].powi(2)).sqrt()
        };
        let gap = (mean * rho.mass).abs();
        report.sup_gap = report.sup_gap.max(gap);
        if se > 0.0 {
            report.sup_ratio = report.sup_ratio.max(gap / se);
        } else if gap > 0.0 {
            report.sup_ratio = f64::INFINITY;
        }
        report.gaps.push(gap);
        report.std_errors.push(se);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feynman_kac::{backward_field, forward_measure, InitialMeasure, McParams, OperatorCoefficients, SpaceGrid};
    use crate::expr::Expr;
    use crate::roughpath::{lift_piecewise_linear, Grid};

    #[test]
    fn unit_field_has_zero_gap() {
        let c = OperatorCoefficients::parse(1, &[vec!["0.8"]], &["-0.2*x"], "0", &[vec!["0.3"]], &["0"]).unwrap();
        let grid = Grid::uniform(1.0, 32).unwrap();
        let vals: Vec<Vec<f64>> = grid.times().iter().map(|t| vec![t.sin()]).collect();
        let w = lift_piecewise_linear(&grid, &vals, 0.5).unwrap().into_inner();
        let idx = vec![0, 16, 32];
        let space = SpaceGrid::uniform(1, 6.0, 25).unwrap();
        let u = BackwardField::tabulate(idx.clone(), vec![0.0, 0.5, 1.0], space, "1", |_, _| 1.0).unwrap();
        let rho = forward_measure(&c, &InitialMeasure::dirac(&[0.1]), &w, &McParams::new(200, 3), &idx).unwrap();
        let r = check_duality(&u, &rho).unwrap();
        assert!(r.sup_gap < 1e-14);
    }

    #[test]
    fn stochastic_gap_within_error() {
        let c = OperatorCoefficients::parse(1, &[vec!["0.6"]], &["-0.3*x"], "0.1", &[vec!["0.4"]], &["0.2*cos(x)"])
            .unwrap();
        let grid = Grid::uniform(1.0, 32).unwrap();
        let vals: Vec<Vec<f64>> = grid.times().iter().map(|t| vec![(3.0 * t).sin()]).collect();
        let w = lift_piecewise_linear(&grid, &vals, 0.5).unwrap().into_inner();
        let idx = vec![0, 8, 16, 24, 32];
        let space = SpaceGrid::uniform(1, 5.0, 41).unwrap();
        let g = Expr::parse("exp(-x^2)").unwrap();
        let u = backward_field(&c, &g, &w, &idx, &space, &McParams::new(2000, 5)).unwrap();
        let nu = InitialMeasure::Gaussian {
            mean: vec![0.2],
            std: 0.5,
            mass: 1.0,
        };
        let rho = forward_measure(&c, &nu, &w, &McParams::new(4000, 6), &idx).unwrap();
        let r = check_duality(&u, &rho).unwrap();
        assert!(r.within(4.0, 0.0), "{r:?}");
        assert_eq!(r.extrapolated, 0);
    }
}
