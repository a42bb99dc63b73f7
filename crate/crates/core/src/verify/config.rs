use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::families::TestFamily;
use super::tolerance::ToleranceModel;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::feynman_kac::{InitialMeasure, McParams, OperatorCoefficients, SpaceGrid};
use crate::reference::SmoothDriver;
use crate::rng::Stream;
use crate::roughpath::{brownian_lift, pure_area, Grid, PathManifest, RoughPath};

fn config_error(field: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        msg: msg.into(),
    }
}

/// Coefficients either by preset name or as expression strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    Preset {
        preset: String,
    },
    Explicit {
        dim: usize,
        /// `d × m` rows.
        #[serde(default)]
        sigma: Vec<Vec<String>>,
        b: Vec<String>,
        #[serde(default = "zero_string")]
        c: String,
        /// `d × e` rows.
        beta: Vec<Vec<String>>,
        gamma: Vec<String>,
    },
}

fn zero_string() -> String {
    "0".into()
}

/// Named coefficient sets, all in one space dimension with one rough component.
pub const PRESETS: [&str; 5] = ["transport", "heat", "zakai", "ou_filter", "linear_weight"];

fn preset(name: &str) -> Option<OperatorCoefficients> {
    let p = |s: &[Vec<&str>], b: &str, c: &str, beta: &str, gamma: &str| {
        OperatorCoefficients::parse(1, s, &[b], c, &[vec![beta]], &[gamma]).expect("presets parse")
    };
    Some(match name {
        "transport" => p(&[], "0", "0", "1", "0"),
        "heat" => p(&[vec!["1"]], "0", "0", "0", "0"),
        "zakai" => p(&[vec!["0.6"]], "-0.3*x", "0", "0.4", "0.3*sin(x)"),
        "ou_filter" => p(&[vec!["0.8"]], "-0.5*x", "-0.1", "0.3*cos(x)", "0.2*x/(1+x^2)"),
        "linear_weight" => p(&[vec!["0.5"]], "0.2*sin(x)", "0.3", "0.5", "0"),
        _ => return None,
    })
}

impl CoefficientSpec {
    pub fn build(&self) -> Result<OperatorCoefficients> {
        match self {
            CoefficientSpec::Preset { preset: name } => preset(name).ok_or_else(|| {
                config_error(
                    "coefficients.preset",
                    format!("unknown preset `{name}` (known: {})", PRESETS.join(", ")),
                )
            }),
            CoefficientSpec::Explicit {
                dim,
                sigma,
                b,
                c,
                beta,
                gamma,
            } => {
                fn rows(m: &[Vec<String>]) -> Vec<Vec<&str>> {
                    m.iter().map(|r| r.iter().map(|s| s.as_str()).collect()).collect()
                }
                let b: Vec<&str> = b.iter().map(|s| s.as_str()).collect();
                let gamma: Vec<&str> = gamma.iter().map(|s| s.as_str()).collect();
                OperatorCoefficients::parse(*dim, &rows(sigma), &b, c, &rows(beta), &gamma)
                    .map_err(|e| config_error("coefficients", e.to_string()))
            }
        }
    }
}

/// Where the rough driver comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverSpec {
    /// Canonical lift of `t ↦ W_t` given by expressions in `t`.
    Smooth {
        components: Vec<String>,
        horizon: f64,
        steps: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Brownian {
        dim: usize,
        seed: u64,
        horizon: f64,
        steps: usize,
        #[serde(default = "default_refinement")]
        refinement: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    PureArea {
        rate: f64,
        horizon: f64,
        steps: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// A path CSV as written by `lift`.
    File {
        path: PathBuf,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
}

fn default_alpha() -> f64 {
    0.45
}

fn default_refinement() -> usize {
    16
}

impl DriverSpec {
    pub fn alpha(&self) -> f64 {
        match self {
            DriverSpec::Smooth { alpha, .. }
            | DriverSpec::Brownian { alpha, .. }
            | DriverSpec::PureArea { alpha, .. }
            | DriverSpec::File { alpha, .. } => *alpha,
        }
    }

    /// The smooth driver, when there is one.
    pub fn smooth(&self) -> Result<Option<SmoothDriver>> {
        match self {
            DriverSpec::Smooth {
                components,
                horizon,
                steps,
                ..
            } => {
                let c: Vec<&str> = components.iter().map(|s| s.as_str()).collect();
                Ok(Some(SmoothDriver::parse(&c, *horizon, *steps)?))
            }
            _ => Ok(None),
        }
    }

    /// Build the path; relative file paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<(RoughPath, PathManifest)> {
        let alpha = self.alpha();
        let (path, kind, seed, refinement) = match self {
            DriverSpec::Smooth { .. } => {
                let s = self.smooth()?.expect("smooth driver");
                (s.canonical_lift(alpha)?.into_inner(), "smooth", None, None)
            }
            DriverSpec::Brownian {
                dim,
                seed,
                horizon,
                steps,
                refinement,
                ..
            } => {
                let grid = Grid::uniform(*horizon, *steps)?;
                let p = brownian_lift(&mut Stream::new(*seed, 0), &grid, *dim, alpha, *refinement)?;
                (p.into_inner(), "brownian", Some(*seed), Some(*refinement))
            }
            DriverSpec::PureArea {
                rate, horizon, steps, ..
            } => {
                let grid = Grid::uniform(*horizon, *steps)?;
                (pure_area(&grid, *rate, alpha)?.into_inner(), "pure_area", None, None)
            }
            DriverSpec::File { path, .. } => {
                let full = if path.is_relative() { base.join(path) } else { path.clone() };
                (RoughPath::read_csv(&full, alpha)?, "file", None, None)
            }
        };
        let manifest = PathManifest {
            kind: kind.into(),
            dim: path.dim(),
            alpha,
            grid: path.grid().clone(),
            seed,
            refinement,
        };
        Ok((path, manifest))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Space box `[-half_width, half_width]^d`.
    pub half_width: f64,
    /// Nodes per axis.
    pub points: usize,
    /// Number of equal record intervals in time (must divide the driver steps).
    pub records: usize,
    /// Time steps of the finite-difference reference (smooth drivers only).
    #[serde(default)]
    pub fd_steps: Option<usize>,
    /// Nodes per axis of the finite-difference reference.
    #[serde(default)]
    pub fd_points: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSpec {
    #[serde(default = "yes")]
    pub weak_backward: bool,
    #[serde(default = "yes")]
    pub weak_forward: bool,
    #[serde(default = "yes")]
    pub duality: bool,
    /// Compare with the finite-difference reference (smooth drivers).
    #[serde(default)]
    pub fd_reference: bool,
    #[serde(default)]
    pub backward_family: TestFamily,
    #[serde(default = "gauss")]
    pub forward_family: TestFamily,
}

fn yes() -> bool {
    true
}

fn gauss() -> TestFamily {
    TestFamily::GaussWindowed
}

impl Default for TestSpec {
    fn default() -> Self {
        TestSpec {
            weak_backward: true,
            weak_forward: true,
            duality: true,
            fd_reference: false,
            backward_family: TestFamily::default(),
            forward_family: TestFamily::GaussWindowed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default)]
    pub model: ToleranceModel,
    /// Duality: `gap <= k·std_error + slack`.
    #[serde(default = "four")]
    pub duality_k: f64,
    #[serde(default = "default_slack")]
    pub duality_slack: f64,
    /// Reference comparison: `|u - u_fd| <= k·std_error + fd_slack`.
    #[serde(default = "three")]
    pub fd_k: f64,
    #[serde(default = "default_fd_slack")]
    pub fd_slack: f64,
}

fn four() -> f64 {
    4.0
}

fn three() -> f64 {
    3.0
}

fn default_slack() -> f64 {
    1e-3
}

fn default_fd_slack() -> f64 {
    5e-3
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec {
            model: ToleranceModel::default(),
            duality_k: 4.0,
            duality_slack: default_slack(),
            fd_k: 3.0,
            fd_slack: default_fd_slack(),
        }
    }
}

/// Optional Wong–Zakai section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WongZakaiSpec {
    pub levels: Vec<u32>,
    #[serde(default = "ten")]
    pub seeds: usize,
}

fn ten() -> usize {
    10
}

/// A full scenario: problem data, driver, grids, Monte Carlo and checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub coefficients: CoefficientSpec,
    pub driver: DriverSpec,
    /// Terminal datum `g` of the backward problem.
    pub datum: String,
    /// Initial measure `ν` of the forward problem.
    pub initial: InitialMeasure,
    pub grids: GridSpec,
    pub mc: McParams,
    #[serde(default)]
    pub tests: TestSpec,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    #[serde(default)]
    pub wong_zakai: Option<WongZakaiSpec>,
    /// Output directory, relative to the config file.
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Starting point of `solve-rde`.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ScenarioConfig {
    /// Parse JSON; syntax and shape errors carry line and column.
    pub fn from_json(src: &str) -> Result<ScenarioConfig> {
        let cfg: ScenarioConfig = serde_json::from_str(src).map_err(|e| {
            config_error(&format!("line {} column {}", e.line(), e.column()), e.to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<ScenarioConfig> {
        ScenarioConfig::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let coeffs = self.coefficients.build()?;
        let positive = |v: f64, field: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_error(field, format!("must be positive, got {v}")))
            }
        };
        let t = &self.tolerances;
        positive(t.duality_k, "tolerances.duality_k")?;
        positive(t.fd_k, "tolerances.fd_k")?;
        if !(t.duality_slack >= 0.0) || !(t.fd_slack >= 0.0) {
            return Err(config_error("tolerances", "slacks must be nonnegative"));
        }
        if !t.model.is_valid() || t.model.a + t.model.b + t.model.c <= 0.0 {
            return Err(config_error("tolerances.model", "constants must be nonnegative and not all zero"));
        }
        positive(self.grids.half_width, "grids.half_width")?;
        if self.grids.points < 2 {
            return Err(config_error("grids.points", "need at least 2 nodes per axis"));
        }
        let steps = match &self.driver {
            DriverSpec::Smooth { steps, horizon, .. }
            | DriverSpec::Brownian { steps, horizon, .. }
            | DriverSpec::PureArea { steps, horizon, .. } => {
                positive(*horizon, "driver.horizon")?;
                Some(*steps)
            }
            DriverSpec::File { .. } => None,
        };
        let alpha = self.driver.alpha();
        if !(alpha > 1.0 / 3.0 && alpha <= 0.5) {
            return Err(config_error("driver.alpha", format!("must lie in (1/3, 1/2], got {alpha}")));
        }
        if let Some(steps) = steps {
            if self.grids.records == 0 || steps % self.grids.records != 0 {
                return Err(config_error(
                    "grids.records",
                    format!("must divide the driver steps ({steps}), got {}", self.grids.records),
                ));
            }
        }
        let e = match &self.driver {
            DriverSpec::Smooth { components, .. } => Some(components.len()),
            DriverSpec::Brownian { dim, .. } => Some(*dim),
            DriverSpec::PureArea { .. } => Some(2),
            DriverSpec::File { .. } => None,
        };
        if let Some(e) = e {
            if e != coeffs.rough_dim() {
                return Err(config_error(
                    "driver",
                    format!("driver dimension {e} does not match {} rough fields", coeffs.rough_dim()),
                ));
            }
        }
        Expr::parse(&self.datum).map_err(|e| config_error("datum", e.to_string()))?;
        if self.initial.dim() != coeffs.dim() {
            return Err(config_error("initial", "dimension differs from the coefficients"));
        }
        self.initial
            .validate()
            .map_err(|e| config_error("initial", e.to_string()))?;
        self.mc.validate().map_err(|e| config_error("mc", e.to_string()))?;
        if self.tests.fd_reference && !matches!(self.driver, DriverSpec::Smooth { .. }) {
            return Err(config_error("tests.fd_reference", "needs a smooth driver"));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != coeffs.dim() {
                return Err(config_error("x0", "dimension differs from the coefficients"));
            }
        }
        if let Some(wz) = &self.wong_zakai {
            if wz.levels.is_empty() || wz.seeds == 0 {
                return Err(config_error("wong_zakai", "need at least one level and one seed"));
            }
        }
        Ok(())
    }

    pub fn space(&self, dim: usize) -> Result<SpaceGrid> {
        SpaceGrid::uniform(dim, self.grids.half_width, self.grids.points)
    }

    /// Record indices `0, n/r, 2n/r, ..., n` on a driver with `n` steps.
    pub fn record_indices(&self, steps: usize) -> Result<Vec<usize>> {
        let r = self.grids.records;
        if r == 0 || steps % r != 0 {
            return Err(config_error("grids.records", format!("must divide the driver steps ({steps})")));
        }
        Ok((0..=r).map(|k| k * steps / r).collect())
    }
}
