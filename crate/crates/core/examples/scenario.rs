//! Full scenario run from a JSON file (default: the bundled transport case).

use std::path::PathBuf;

use rpde::verify::{run_scenario, OutputFormat, Prepared, ScenarioConfig};

fn main() -> rpde::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/transport.json"));
    let cfg = ScenarioConfig::read(&path)?;
    let prep = Prepared::new(cfg, path.parent().unwrap())?;
    let out = std::env::temp_dir().join(format!("rpde_{}", prep.config.name));
    let summary = run_scenario(&prep, &out, OutputFormat::Csv)?;
    for c in &summary.checks {
        println!("{:<22} {:.3e} / {:.3e}  {}", c.name, c.value, c.threshold, if c.pass { "pass" } else { "fail" });
    }
    println!("outputs in {}", out.display());
    Ok(())
}
