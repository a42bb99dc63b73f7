//! Conservation of the pairing between the backward field and the forward
//! measure along a rough driver.

use rpde::expr::Expr;
use rpde::feynman_kac::{backward_field, forward_measure, InitialMeasure, McParams, OperatorCoefficients, SpaceGrid};
use rpde::rng::Stream;
use rpde::roughpath::{brownian_lift, Grid};
use rpde::verify::check_duality;

fn main() -> rpde::Result<()> {
    let grid = Grid::uniform(1.0, 64)?;
    let w = brownian_lift(&mut Stream::new(3, 0), &grid, 1, 0.45, 16)?.into_inner();
    let coeffs = OperatorCoefficients::parse(1, &[vec!["0.6"]], &["-0.3*x"], "0", &[vec!["0.4"]], &["0.3*sin(x)"])?;
    let records = [0, 16, 32, 48, 64];
    let space = SpaceGrid::uniform(1, 6.0, 49)?;
    let u = backward_field(&coeffs, &Expr::parse("exp(-x^2/2)")?, &w, &records, &space, &McParams::new(1000, 1))?;
    let nu = InitialMeasure::Gaussian {
        mean: vec![0.3],
        std: 0.6,
        mass: 1.0,
    };
    let rho = forward_measure(&coeffs, &nu, &w, &McParams::new(4000, 2), &records)?;
    let r = check_duality(&u, &rho)?;
    for i in 0..r.times.len() {
        println!("t = {:.2}  pairing {:.5}  gap {:.2e}  std error {:.2e}", r.times[i], r.pairings[i], r.gaps[i], r.std_errors[i]);
    }
    println!("within 4 standard errors: {}", r.within(4.0, 0.0));
    Ok(())
}
