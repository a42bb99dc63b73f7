//! Dyadic piecewise-linear approximations of a Brownian-like driver and the
//! resulting backward fields and forward measures.

use std::time::Instant;

use rpde::expr::Expr;
use rpde::feynman_kac::{InitialMeasure, McParams, OperatorCoefficients, SpaceGrid};
use rpde::reference::{wong_zakai_study, WongZakaiScenario};
use rpde::rng::Stream;
use rpde::roughpath::{brownian_lift, Grid};

fn main() -> rpde::Result<()> {
    let grid = Grid::uniform(1.0, 1 << 10)?;
    let target = brownian_lift(&mut Stream::new(7, 0), &grid, 2, 0.35, 16)?.into_inner();
    let scenario = WongZakaiScenario {
        coeffs: OperatorCoefficients::parse(
            1,
            &[vec!["0.5"]],
            &["-0.2*x"],
            "0",
            &[vec!["0.6", "0.6*sin(x)"]],
            &["0", "0.1*cos(x)"],
        )?,
        datum: Expr::parse("exp(-x^2)")?,
        space: SpaceGrid::uniform(1, 3.0, 9)?,
        records: (0..=1024).step_by(64).collect(),
        mc: McParams::new(100, 11),
        seeds: 10,
        initial: InitialMeasure::Gaussian {
            mean: vec![0.0],
            std: 0.5,
            mass: 1.0,
        },
    };
    let start = Instant::now();
    let table = wong_zakai_study(&target, &[4, 5, 6, 7, 8, 9], &scenario)?;
    println!("level  mesh       metric     field_gap  noise      kr_gap");
    for r in &table.rows {
        println!(
            "{:>5}  {:<9.3e}  {:<9.3e}  {:<9.3e}  {:<9.3e}  {:<9.3e}",
            r.level, r.mesh, r.metric, r.field_gap, r.field_gap_noise, r.kr_gap
        );
    }
    println!(
        "field gap decreasing within 2x noise: {}, metric decreasing: {} ({:.1?})",
        table.field_gap_decreasing(2.0),
        table.metric_decreasing(),
        start.elapsed()
    );
    Ok(())
}
