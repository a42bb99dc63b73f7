use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metric::rough_metric;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::feynman_kac::{backward_field, forward_measure, BackwardField, InitialMeasure, McParams, OperatorCoefficients, SpaceGrid};
use crate::roughpath::RoughPath;
use crate::verify::kr_distance;

/// What the study solves on every approximation level.
#[derive(Clone, Debug)]
pub struct WongZakaiScenario {
    pub coeffs: OperatorCoefficients,
    pub datum: Expr,
    pub space: SpaceGrid,
    /// Grid indices at which backward fields are compared.
    pub records: Vec<usize>,
    pub mc: McParams,
    /// Number of seeds `mc.seed, mc.seed + 1, ...` averaged per level.
    pub seeds: usize,
    pub initial: InitialMeasure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WongZakaiRow {
    pub level: u32,
    /// Length of one linear piece.
    pub mesh: f64,
    pub metric: f64,
    /// Seed-averaged sup-norm gap between the backward fields.
    pub field_gap: f64,
    /// Standard error of `field_gap` over the seeds.
    pub field_gap_noise: f64,
    /// KR distance of the forward measures at the final time.
    pub kr_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WongZakaiTable {
    pub rows: Vec<WongZakaiRow>,
}

impl WongZakaiTable {
    /// Each field gap exceeds the next by at least `-k` times the combined noise.
    pub fn field_gap_decreasing(&self, k: f64) -> bool {
        self.rows.windows(2).all(|w| {
            let noise = w[0].field_gap_noise.hypot(w[1].field_gap_noise);
            w[1].field_gap <= w[0].field_gap + k * noise
        })
    }

    pub fn metric_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].metric < w[0].metric)
    }

    /// CSV with columns `level, mesh, metric, field_gap, field_gap_noise, kr_gap`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fields(s: &WongZakaiScenario, driver: &RoughPath) -> Result<Vec<BackwardField>> {
    (0..s.seeds)
        .map(|k| {
            let mc = McParams {
                seed: s.mc.seed.wrapping_add(k as u64),
                ..s.mc
            };
            backward_field(&s.coeffs, &s.datum, driver, &s.records, &s.space, &mc)
        })
        .collect()
}

/// Compare solutions driven by dyadic piecewise-linear approximations of
/// `target` with those driven by `target` itself, one row per level.
pub fn wong_zakai_study(target: &RoughPath, levels: &[u32], scenario: &WongZakaiScenario) -> Result<WongZakaiTable> {
    if scenario.seeds == 0 {
        return Err(Error::InvalidMc("the study needs at least one seed".into()));
    }
    let n = target.steps();
    let reference = fields(scenario, target)?;
    let last = [0, n];
    let rho_target = forward_measure(&scenario.coeffs, &scenario.initial, target, &scenario.mc, &last)?;
    let slice_target = rho_target.slice(1)?;
    let rows = levels
        .par_iter()
        .map(|&level| -> Result<WongZakaiRow> {
            let approx = target.piecewise_linear_approximation(level);
            let metric = rough_metric(&approx, target)?;
            let gaps = fields(scenario, &approx)?
                .iter()
                .zip(&reference)
                .map(|(a, b)| a.sup_distance(b))
                .collect::<Result<Vec<f64>>>()?;
            let k = gaps.len() as f64;
            let field_gap = gaps.iter().sum::<f64>() / k;
            let var = if gaps.len() > 1 {
                gaps.iter().map(|g| (g - field_gap).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            let rho = forward_measure(&scenario.coeffs, &scenario.initial, &approx, &scenario.mc, &last)?;
            let kr_gap = kr_distance(&rho.slice(1)?, &slice_target)?.value();
            Ok(WongZakaiRow {
                level,
                mesh: target.grid().horizon() / (1usize << level).min(n) as f64,
                metric,
                field_gap,
                field_gap_noise: (var / k).sqrt(),
                kr_gap,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WongZakaiTable { rows })
}
