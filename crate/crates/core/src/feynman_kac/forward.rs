use std::path::Path;

use serde::{Deserialize, Serialize};

use super::backward::{backward_smoothness, LogWeight, ParticleDriver, Propagator};
use super::coefficients::OperatorCoefficients;
use super::estimate::{map_chunks, weighted_mean, Estimate, McParams};
use crate::error::{ensure_dim, Error, Result};
use crate::rde::VectorFields;
use crate::rng::{NormalSource, Stream, StreamFamily};
use crate::roughpath::RoughPath;

/// Finite initial measure `ν`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialMeasure {
    /// `Σ_j w_j δ_{x_j}`.
    Atoms { points: Vec<Vec<f64>>, weights: Vec<f64> },
    /// `mass · N(mean, std² I)`.
    Gaussian { mean: Vec<f64>, std: f64, mass: f64 },
    /// `mass ·` uniform law on the box `[low, high]`.
    Uniform { low: Vec<f64>, high: Vec<f64>, mass: f64 },
}

impl InitialMeasure {
    pub fn dirac(x: &[f64]) -> InitialMeasure {
        InitialMeasure::Atoms {
            points: vec![x.to_vec()],
            weights: vec![1.0],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialMeasure::Atoms { points, .. } => points.first().map_or(0, |p| p.len()),
            InitialMeasure::Gaussian { mean, .. } => mean.len(),
            InitialMeasure::Uniform { low, .. } => low.len(),
        }
    }

    /// `ν(R^d)`.
    pub fn mass(&self) -> f64 {
        match self {
            InitialMeasure::Atoms { weights, .. } => weights.iter().sum(),
            InitialMeasure::Gaussian { mass, .. } | InitialMeasure::Uniform { mass, .. } => *mass,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSampler(m.to_string()));
        match self {
            InitialMeasure::Atoms { points, weights } => {
                if points.is_empty() || points.len() != weights.len() {
                    return bad("atoms need matching, nonempty points and weights");
                }
                let d = points[0].len();
                if d == 0 || points.iter().any(|p| p.len() != d || p.iter().any(|v| !v.is_finite())) {
                    return bad("atom points must share a positive dimension and be finite");
                }
                if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || self.mass() <= 0.0 {
                    return bad("atom weights must be nonnegative with positive total");
                }
            }
            InitialMeasure::Gaussian { mean, std, mass } => {
                if mean.is_empty() || !(*std >= 0.0) || !(*mass > 0.0) || !std.is_finite() || !mass.is_finite() {
                    return bad("gaussian needs a mean, std >= 0 and mass > 0");
                }
            }
            InitialMeasure::Uniform { low, high, mass } => {
                if low.is_empty() || low.len() != high.len() || low.iter().zip(high).any(|(a, b)| !(b > a)) {
                    return bad("uniform needs low < high componentwise");
                }
                if !(*mass > 0.0) || !mass.is_finite() {
                    return bad("uniform needs mass > 0");
                }
            }
        }
        Ok(())
    }

    /// Draw one point from `ν / ν(R^d)`.
    pub fn sample(&self, stream: &mut Stream, out: &mut [f64]) {
        match self {
            InitialMeasure::Atoms { points, weights } => {
                let j = if points.len() == 1 {
                    0
                } else {
                    let mut u = stream.uniform() * self.mass();
                    let mut j = points.len() - 1;
                    for (i, w) in weights.iter().enumerate() {
                        if u < *w {
                            j = i;
                            break;
                        }
                        u -= w;
                    }
                    j
                };
                out.copy_from_slice(&points[j]);
            }
            InitialMeasure::Gaussian { mean, std, .. } => {
                for (o, m) in out.iter_mut().zip(mean) {
                    *o = m + std * stream.next_normal();
                }
            }
            InitialMeasure::Uniform { low, high, .. } => {
                for (o, (a, b)) in out.iter_mut().zip(low.iter().zip(high)) {
                    *o = a + (b - a) * stream.uniform();
                }
            }
        }
    }
}

/// Weighted particles representing `ρ_t` at recorded grid times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleMeasure {
    pub dim: usize,
    pub mass: f64,
    pub time_indices: Vec<usize>,
    pub times: Vec<f64>,
    /// `positions[r]`: `N × d` positions at record `r`.
    pub positions: Vec<Vec<f64>>,
    /// `log_weights[r][i] = log w^i` at record `r`.
    pub log_weights: Vec<Vec<f64>>,
    pub initial: InitialMeasure,
}

/// Atoms with absolute masses, the input of the KR distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSlice {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
}

impl MeasureSlice {
    pub fn new(dim: usize, points: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<MeasureSlice> {
        ensure_dim(points.len(), masses.len())?;
        for p in &points {
            ensure_dim(dim, p.len())?;
        }
        if let Some(m) = masses.iter().find(|m| !(**m >= 0.0)) {
            return Err(Error::NegativeWeight(*m));
        }
        Ok(MeasureSlice { dim, points, masses })
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}

impl ParticleMeasure {
    pub fn particles(&self) -> usize {
        self.log_weights.first().map_or(0, |l| l.len())
    }

    pub fn records(&self) -> usize {
        self.time_indices.len()
    }

    pub fn record_of(&self, k: usize) -> Option<usize> {
        self.time_indices.iter().position(|&i| i == k)
    }

    pub fn position(&self, r: usize, i: usize) -> &[f64] {
        &self.positions[r][i * self.dim..(i + 1) * self.dim]
    }

    /// `ρ_t(f) ≈ (ν(R^d)/N) Σ w^i f(X^i)` at record `r`.
    pub fn pair<F: Fn(&[f64]) -> f64>(&self, r: usize, f: F) -> Result<Estimate> {
        let values: Vec<f64> = (0..self.particles()).map(|i| f(self.position(r, i))).collect();
        weighted_mean(&values, &self.log_weights[r], self.mass)
    }

    /// `ρ_t(1)`.
    pub fn total_mass(&self, r: usize) -> Result<Estimate> {
        self.pair(r, |_| 1.0)
    }

    /// Weights `w^i` (not normalised).
    pub fn weights(&self, r: usize) -> Vec<f64> {
        self.log_weights[r].iter().map(|l| l.exp()).collect()
    }

    pub fn slice(&self, r: usize) -> Result<MeasureSlice> {
        let n = self.particles() as f64;
        let masses = self.weights(r).iter().map(|w| self.mass * w / n).collect();
        let points = (0..self.particles()).map(|i| self.position(r, i).to_vec()).collect();
        MeasureSlice::new(self.dim, points, masses)
    }

    /// CSV with columns `t, particle, X_1.., w`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string(), "particle".to_string()];
        header.extend((1..=self.dim).map(|i| format!("X_{i}")));
        header.push("w".into());
        w.write_record(&header)?;
        for (r, t) in self.times.iter().enumerate() {
            for i in 0..self.particles() {
                let mut row = vec![t.to_string(), i.to_string()];
                row.extend(self.position(r, i).iter().map(|v| v.to_string()));
                row.push(self.log_weights[r][i].exp().to_string());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Tag of the stream family used for initial samples.
const INITIAL_TAG: u64 = 1;

/// Weighted particle approximation of
/// `ρ_t(f) = E^{0,ν}[f(X_t) exp(∫_0^t c dr + ∫_0^t γ(X) d𝐖)]`, recorded at
/// the grid indices `record` (sorted).
pub fn forward_measure(
    coeffs: &OperatorCoefficients,
    nu: &InitialMeasure,
    driver: &RoughPath,
    mc: &McParams,
    record: &[usize],
) -> Result<ParticleMeasure> {
    mc.validate()?;
    nu.validate()?;
    coeffs.check_smoothness(&backward_smoothness(), "forward_measure");
    let cc = coeffs.compile_active()?;
    let d = cc.state_dim();
    ensure_dim(d, nu.dim())?;
    ensure_dim(cc.rough_dim(), driver.dim())?;
    let n = driver.steps();
    if record.windows(2).any(|w| w[1] <= w[0]) || record.last().is_some_and(|&k| k > n) {
        return Err(Error::InvalidGrid("record indices must be increasing grid indices".into()));
    }
    let family = StreamFamily::new(mc.seed);
    let initial = family.split(INITIAL_TAG);
    let m = cc.brownian_dim();
    let grid = driver.grid();
    let last = record.last().copied().unwrap_or(0);
    let chunks = map_chunks(mc.particles, |range| {
        let mut pd = ParticleDriver::new(driver, m, family, mc.subgrid);
        let mut prop = Propagator::new(&cc);
        let len = range.len();
        let mut pos = vec![vec![0.0; len * d]; record.len()];
        let mut lws = vec![vec![0.0; len]; record.len()];
        let mut x = vec![0.0; d];
        for (local, i) in range.enumerate() {
            nu.sample(&mut initial.stream(i as u64), &mut x);
            let z = pd.load(i)?;
            let mut next = 0;
            if record.first() == Some(&0) {
                pos[0][local * d..(local + 1) * d].copy_from_slice(&x);
                next = 1;
            }
            let mut lw = LogWeight::default();
            prop.run(&cc, z, 0, last, &mut x, &mut lw, |k, x, lw| {
                if next < record.len() && record[next] == k {
                    pos[next][local * d..(local + 1) * d].copy_from_slice(x);
                    lws[next][local] = lw.total(&cc, 0.0, grid.time(k));
                    next += 1;
                }
            })?;
        }
        Ok((pos, lws))
    })?;
    let mut positions = vec![Vec::with_capacity(mc.particles * d); record.len()];
    let mut log_weights = vec![Vec::with_capacity(mc.particles); record.len()];
    for (pos, lws) in chunks {
        for r in 0..record.len() {
            positions[r].extend_from_slice(&pos[r]);
            log_weights[r].extend_from_slice(&lws[r]);
        }
    }
    Ok(ParticleMeasure {
        dim: d,
        mass: nu.mass(),
        time_indices: record.to_vec(),
        times: record.iter().map(|&k| grid.time(k)).collect(),
        positions,
        log_weights,
        initial: nu.clone(),
    })
}
