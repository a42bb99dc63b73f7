use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rpde::verify::{
    check_duality, default_out_dir, duality_ratio, run_scenario, write_artifact, CheckResult, DriverDump, OutputFormat, Prepared,
    ScenarioConfig,
};
use rpde::{Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "rpde", version, about = "Rough paths and Feynman-Kac solvers for rough PDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the Monte Carlo seed of the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: the scenario's `output`, relative to the file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Build the driver lift.
    Lift,
    /// Solve the rough SDE from `x0` along the driver.
    SolveRde,
    /// Monte Carlo backward field on the scenario grid.
    SolveBackward,
    /// Weighted particle approximation of the forward measure.
    SolveForward,
    /// Weak-form residuals of the backward field and the forward measure.
    CheckWeak,
    /// Conservation of the pairing between backward field and forward measure.
    CheckDuality,
    /// Dyadic piecewise-linear approximation study.
    WongZakai,
    /// Every enabled check of the scenario.
    Run,
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config { .. } | Error::Json(_) | Error::Parse { .. } | Error::Io(_))
}

fn write_summary<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<()> {
    std::fs::write(out.join(name), serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn report(checks: &[CheckResult]) -> bool {
    for c in checks {
        println!(
            "{:<22} {} value {:.4e} threshold {:.4e}",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.value,
            c.threshold
        );
    }
    checks.iter().all(|c| c.pass)
}

fn execute(cli: &Cli) -> std::result::Result<bool, Error> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config {
        field: "--config".into(),
        msg: "a scenario file is required".into(),
    })?;
    let mut config = ScenarioConfig::read(path)?;
    if let Some(seed) = cli.seed {
        config.mc.seed = seed;
    }
    let out = cli.out.clone().unwrap_or_else(|| default_out_dir(&config, path));
    let base = path.parent().unwrap_or(Path::new("."));
    let prep = Prepared::new(config, base)?;
    let format = match cli.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    std::fs::create_dir_all(&out)?;
    match cli.command {
        Command::Lift => {
            let dump = DriverDump::new(&prep.driver, &prep.driver_manifest);
            let name = write_artifact(&out, "driver", format, &dump, |p| prep.driver.write_csv(p))?;
            prep.driver_manifest.write(&out.join("driver_manifest.json"))?;
            println!("wrote {}", out.join(name).display());
            Ok(true)
        }
        Command::SolveRde => {
            let x = prep.solve_rde()?;
            let name = write_artifact(&out, "rde", format, &x, |p| x.write_csv(p))?;
            println!("X_T = {:?}; wrote {}", x.final_state(), out.join(name).display());
            Ok(true)
        }
        Command::SolveBackward => {
            let u = prep.solve_backward()?;
            let name = write_artifact(&out, "backward", format, &u, |p| u.write_csv(p))?;
            println!("wrote {}", out.join(name).display());
            Ok(true)
        }
        Command::SolveForward => {
            let rho = prep.solve_forward()?;
            let name = write_artifact(&out, "forward", format, &rho, |p| rho.write_csv(p))?;
            println!("wrote {}", out.join(name).display());
            Ok(true)
        }
        Command::CheckWeak => {
            let back = prep.weak_backward(&prep.solve_backward()?)?;
            let fwd = prep.weak_forward(&prep.solve_forward()?)?;
            write_summary(&out, "weak_backward.json", &back)?;
            write_summary(&out, "weak_forward.json", &fwd)?;
            Ok(report(&[
                CheckResult {
                    name: "weak_backward".into(),
                    value: back.worst(),
                    threshold: back.tolerance,
                    pass: back.pass(),
                },
                CheckResult {
                    name: "weak_forward".into(),
                    value: fwd.worst(),
                    threshold: fwd.tolerance,
                    pass: fwd.pass(),
                },
            ]))
        }
        Command::CheckDuality => {
            let r = check_duality(&prep.solve_backward()?, &prep.solve_forward()?)?;
            write_summary(&out, "duality.json", &r)?;
            let tol = &prep.config.tolerances;
            Ok(report(&[CheckResult {
                name: "duality".into(),
                value: duality_ratio(&r, tol.duality_k, tol.duality_slack),
                threshold: 1.0,
                pass: r.within(tol.duality_k, tol.duality_slack),
            }]))
        }
        Command::WongZakai => {
            let spec = prep.config.wong_zakai.clone().ok_or_else(|| Error::Config {
                field: "wong_zakai".into(),
                msg: "the scenario has no wong_zakai section".into(),
            })?;
            let table = prep.wong_zakai(&spec)?;
            write_artifact(&out, "wong_zakai", format, &table, |p| table.write_csv(p))?;
            println!("level  mesh       rho_alpha  field_gap  noise      kr_gap");
            for r in &table.rows {
                println!(
                    "{:>5}  {:<9.3e}  {:<9.3e}  {:<9.3e}  {:<9.3e}  {:<9.3e}",
                    r.level, r.mesh, r.metric, r.field_gap, r.field_gap_noise, r.kr_gap
                );
            }
            Ok(report(&[
                CheckResult {
                    name: "wong_zakai_metric".into(),
                    value: table.rows.last().map_or(0.0, |r| r.metric),
                    threshold: table.rows.first().map_or(0.0, |r| r.metric),
                    pass: table.metric_decreasing(),
                },
                CheckResult {
                    name: "wong_zakai_field_gap".into(),
                    value: table.rows.last().map_or(0.0, |r| r.field_gap),
                    threshold: table.rows.first().map_or(0.0, |r| r.field_gap),
                    pass: table.field_gap_decreasing(2.0),
                },
            ]))
        }
        Command::Run => {
            let summary = run_scenario(&prep, &out, format)?;
            Ok(report(&summary.checks))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
