//! Verification harnesses: weak-form residuals, duality, the
//! Kantorovich–Rubinstein distance, decay fitting and scenario runs.

mod config;
mod decay;
mod duality;
mod families;
mod kr;
mod run;
mod tolerance;
mod weak;

pub use decay::{fit_exp_decay, DecayFit};
pub use duality::{check_duality, DualityReport};
pub use families::TestFamily;
pub use kr::{kr_distance, KrDistance};
pub use tolerance::ToleranceModel;
pub use weak::{check_weak_backward, check_weak_forward, ResidualReport, TestResidual, TAIL_LIMIT};
pub use config::{CoefficientSpec, DriverSpec, GridSpec, ScenarioConfig, TestSpec, ToleranceSpec, WongZakaiSpec, PRESETS};
pub use run::{default_out_dir, duality_ratio, fd_ratio, run_scenario, write_artifact, CheckResult, DriverDump, OutputFormat, Prepared, RunManifest, RunSummary};
