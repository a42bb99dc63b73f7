use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ScenarioConfig, WongZakaiSpec};
use super::duality::{check_duality, DualityReport};
use super::weak::{check_weak_backward, check_weak_forward, ResidualReport};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::feynman_kac::{backward_field, forward_measure, BackwardField, OperatorCoefficients, ParticleMeasure, SpaceGrid};
use crate::reference::{fd_backward_solve, wong_zakai_study, Boundary, FdOptions, SmoothDriver, WongZakaiScenario, WongZakaiTable};
use crate::rng::Stream;
use crate::rde::{build_joint_lift, solve_rde, solve_rough_sde, StatePath};
use crate::roughpath::{PathManifest, RoughPath};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// A config with its derived objects built once.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: ScenarioConfig,
    pub coeffs: OperatorCoefficients,
    pub datum: Expr,
    pub driver: RoughPath,
    pub driver_manifest: PathManifest,
    pub smooth: Option<SmoothDriver>,
    pub space: SpaceGrid,
    pub records: Vec<usize>,
}

impl Prepared {
    /// Build from a config; `base` resolves relative driver files.
    pub fn new(config: ScenarioConfig, base: &Path) -> Result<Prepared> {
        config.validate()?;
        let coeffs = config.coefficients.build()?;
        let datum = Expr::parse(&config.datum)?;
        let (driver, driver_manifest) = config.driver.build(base)?;
        if driver.dim() != coeffs.rough_dim() {
            return Err(Error::Config {
                field: "driver".into(),
                msg: format!("driver dimension {} does not match the coefficients", driver.dim()),
            });
        }
        let smooth = config.driver.smooth()?;
        let space = config.space(coeffs.dim())?;
        let records = config.record_indices(driver.steps())?;
        Ok(Prepared {
            config,
            coeffs,
            datum,
            driver,
            driver_manifest,
            smooth,
            space,
            records,
        })
    }

    /// Particles that actually carry Monte Carlo noise (0 when σ ≡ 0).
    pub fn noisy_particles(&self) -> Result<usize> {
        Ok(if self.coeffs.compile_active()?.brownian_dim() == 0 {
            0
        } else {
            self.config.mc.particles
        })
    }

    pub fn record_mesh(&self) -> f64 {
        self.driver.grid().horizon() / self.config.grids.records as f64
    }

    pub fn solve_backward(&self) -> Result<BackwardField> {
        backward_field(&self.coeffs, &self.datum, &self.driver, &self.records, &self.space, &self.config.mc)
    }

    pub fn solve_forward(&self) -> Result<ParticleMeasure> {
        forward_measure(&self.coeffs, &self.config.initial, &self.driver, &self.config.mc, &self.records)
    }

    /// One path of the rough SDE from `x0` (a deterministic RDE when σ ≡ 0).
    pub fn solve_rde(&self) -> Result<StatePath> {
        let x0 = self.config.x0.clone().unwrap_or_else(|| vec![0.0; self.coeffs.dim()]);
        let cc = self.coeffs.compile_active()?;
        if cc.brownian_dim() == 0 {
            return solve_rde(&cc, &self.driver, &x0);
        }
        let mut stream = Stream::new(self.config.mc.seed, 0);
        let lift = build_joint_lift(&self.driver, &mut stream, cc.brownian_dim(), self.config.mc.subgrid)?;
        Ok(solve_rough_sde(&cc, &lift, &x0, false)?.path)
    }

    pub fn weak_backward(&self, u: &BackwardField) -> Result<ResidualReport> {
        let tests = self
            .config
            .tests
            .backward_family
            .decay_functions(self.coeffs.dim(), self.config.grids.half_width)?;
        let tol = self.config.tolerances.model.tolerance(
            self.space.mesh(),
            self.noisy_particles()?,
            self.record_mesh(),
            self.driver.alpha(),
        );
        check_weak_backward(u, &self.coeffs, &self.driver, &tests, tol)
    }

    pub fn weak_forward(&self, rho: &ParticleMeasure) -> Result<ResidualReport> {
        let tests = self.config.tests.forward_family.functions(self.coeffs.dim());
        let tol = self
            .config
            .tolerances
            .model
            .tolerance(0.0, self.noisy_particles()?, self.record_mesh(), self.driver.alpha());
        check_weak_forward(rho, &self.coeffs, &self.driver, &tests, tol)
    }

    /// Finite-difference field on the record times (smooth drivers only).
    pub fn fd_reference(&self) -> Result<Option<BackwardField>> {
        let Some(smooth) = &self.smooth else {
            return Ok(None);
        };
        let g = &self.config.grids;
        let opts = FdOptions {
            space: SpaceGrid::uniform(self.coeffs.dim(), g.half_width, g.fd_points.unwrap_or(g.points))?,
            time_steps: g.fd_steps.unwrap_or(smooth.grid().steps()),
            record: self.records.iter().map(|&k| self.driver.grid().time(k)).collect(),
            boundary: Boundary::Extrapolate,
        };
        fd_backward_solve(&self.coeffs, &self.datum, smooth, &opts).map(Some)
    }

    pub fn wong_zakai(&self, spec: &WongZakaiSpec) -> Result<WongZakaiTable> {
        let scenario = WongZakaiScenario {
            coeffs: self.coeffs.clone(),
            datum: self.datum.clone(),
            space: self.space.clone(),
            records: self.records.clone(),
            mc: self.config.mc,
            seeds: spec.seeds,
            initial: self.config.initial.clone(),
        };
        wong_zakai_study(&self.driver, &spec.levels, &scenario)
    }
}

/// Largest `|u - u_fd| / (k·std_error + slack)` over common record times
/// and the nodes of the MC space grid with `|x|_inf <= inner`; at most 1
/// means the fields agree.
pub fn fd_ratio(u: &BackwardField, fd: &BackwardField, k: f64, slack: f64, inner: f64) -> f64 {
    let mut worst = 0.0f64;
    for (r, &t) in u.times.iter().enumerate() {
        let Some(rf) = fd.times.iter().position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t.abs())) else {
            continue;
        };
        for (p, x) in u.space.points().iter().enumerate() {
            if x.iter().any(|xi| xi.abs() > inner) {
                continue;
            }
            let gap = (u.values[r][p] - fd.interpolate(rf, x)).abs();
            worst = worst.max(gap / (k * u.std_errors[r][p] + slack));
        }
    }
    worst
}

/// Largest `gap / (k·std_error + slack)` of a duality report.
pub fn duality_ratio(report: &DualityReport, k: f64, slack: f64) -> f64 {
    report
        .gaps
        .iter()
        .zip(&report.std_errors)
        .map(|(g, s)| g / (k * s + slack))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverDump {
    pub manifest: PathManifest,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub step_areas: Vec<Vec<f64>>,
}

impl DriverDump {
    pub fn new(path: &RoughPath, manifest: &PathManifest) -> DriverDump {
        let e = path.dim();
        DriverDump {
            manifest: manifest.clone(),
            times: path.grid().times().to_vec(),
            values: path.values().chunks(e).map(<[f64]>::to_vec).collect(),
            step_areas: (0..path.steps()).map(|k| path.step_second(k).to_vec()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub version: String,
    pub mc_seed: u64,
    pub particles: usize,
    pub subgrid: usize,
    pub driver: PathManifest,
    pub record_indices: Vec<usize>,
    pub space_half_width: f64,
    pub space_points: usize,
    /// Convention of the unit ball in the KR distance.
    pub c1b_norm: String,
    pub config: ScenarioConfig,
    pub files: Vec<String>,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Write a data artifact as `<stem>.csv` or `<stem>.json`; returns the file name.
pub fn write_artifact<T: Serialize>(
    dir: &Path,
    stem: &str,
    format: OutputFormat,
    value: &T,
    csv: impl FnOnce(&Path) -> Result<()>,
) -> Result<String> {
    let name = match format {
        OutputFormat::Csv => format!("{stem}.csv"),
        OutputFormat::Json => format!("{stem}.json"),
    };
    let path = dir.join(&name);
    match format {
        OutputFormat::Csv => csv(&path)?,
        OutputFormat::Json => write_json(&path, value)?,
    }
    Ok(name)
}

fn residual_check(name: &str, report: &ResidualReport) -> CheckResult {
    CheckResult {
        name: name.into(),
        value: report.worst(),
        threshold: report.tolerance,
        pass: report.pass(),
    }
}

fn duality_check(report: &DualityReport, k: f64, slack: f64) -> CheckResult {
    CheckResult {
        name: "duality".into(),
        value: duality_ratio(report, k, slack),
        threshold: 1.0,
        pass: report.within(k, slack),
    }
}

/// Execute the scenario, writing every artifact under `out`.
pub fn run_scenario(prep: &Prepared, out: &Path, format: OutputFormat) -> Result<RunSummary> {
    fs::create_dir_all(out)?;
    let cfg = &prep.config;
    let tol = &cfg.tolerances;
    let mut files = Vec::new();
    let mut checks = Vec::new();
    let dump = DriverDump::new(&prep.driver, &prep.driver_manifest);
    files.push(write_artifact(out, "driver", format, &dump, |p| prep.driver.write_csv(p))?);
    let u = prep.solve_backward()?;
    files.push(write_artifact(out, "backward", format, &u, |p| u.write_csv(p))?);
    let rho = prep.solve_forward()?;
    files.push(write_artifact(out, "forward", format, &rho, |p| rho.write_csv(p))?);
    if cfg.tests.weak_backward {
        let r = prep.weak_backward(&u)?;
        write_json(&out.join("weak_backward.json"), &r)?;
        checks.push(residual_check("weak_backward", &r));
    }
    if cfg.tests.weak_forward {
        let r = prep.weak_forward(&rho)?;
        write_json(&out.join("weak_forward.json"), &r)?;
        checks.push(residual_check("weak_forward", &r));
    }
    if cfg.tests.duality {
        let r = check_duality(&u, &rho)?;
        write_json(&out.join("duality.json"), &r)?;
        checks.push(duality_check(&r, tol.duality_k, tol.duality_slack));
    }
    if cfg.tests.fd_reference {
        if let Some(fd) = prep.fd_reference()? {
            files.push(write_artifact(out, "fd_backward", format, &fd, |p| fd.write_csv(p))?);
            let ratio = fd_ratio(&u, &fd, tol.fd_k, tol.fd_slack, 0.5 * cfg.grids.half_width);
            checks.push(CheckResult {
                name: "fd_reference".into(),
                value: ratio,
                threshold: 1.0,
                pass: ratio <= 1.0,
            });
        }
    }
    if let Some(spec) = &cfg.wong_zakai {
        let table = prep.wong_zakai(spec)?;
        files.push(write_artifact(out, "wong_zakai", format, &table, |p| table.write_csv(p))?);
        checks.push(CheckResult {
            name: "wong_zakai_metric".into(),
            value: table.rows.last().map_or(0.0, |r| r.metric),
            threshold: table.rows.first().map_or(0.0, |r| r.metric),
            pass: table.metric_decreasing(),
        });
        checks.push(CheckResult {
            name: "wong_zakai_field_gap".into(),
            value: table.rows.last().map_or(0.0, |r| r.field_gap),
            threshold: table.rows.first().map_or(0.0, |r| r.field_gap),
            pass: table.field_gap_decreasing(2.0),
        });
    }
    let summary = RunSummary {
        name: cfg.name.clone(),
        pass: checks.iter().all(|c| c.pass),
        checks,
    };
    let manifest = RunManifest {
        name: cfg.name.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        mc_seed: cfg.mc.seed,
        particles: cfg.mc.particles,
        subgrid: cfg.mc.subgrid,
        driver: prep.driver_manifest.clone(),
        record_indices: prep.records.clone(),
        space_half_width: cfg.grids.half_width,
        space_points: cfg.grids.points,
        c1b_norm: "max(|f|_inf, |Df|_inf) <= 1".into(),
        config: cfg.clone(),
        files,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Output directory of a config read from `config_path`.
pub fn default_out_dir(config: &ScenarioConfig, config_path: &Path) -> PathBuf {
    if config.output.is_absolute() {
        config.output.clone()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(&config.output)
    }
}
