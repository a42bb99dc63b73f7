//! Weighted particles for the forward (Zakai-type) equation and the density
//! of the forward measure.

use rpde::expr::Expr;
use rpde::feynman_kac::{forward_density, forward_measure, ExpDecayFunction, InitialMeasure, McParams, OperatorCoefficients, SpaceGrid};
use rpde::rng::Stream;
use rpde::roughpath::{brownian_lift, Grid};

fn main() -> rpde::Result<()> {
    let grid = Grid::uniform(1.0, 128)?;
    let w = brownian_lift(&mut Stream::new(9, 0), &grid, 1, 0.45, 16)?.into_inner();
    let coeffs = OperatorCoefficients::parse(1, &[vec!["0.8"]], &["-0.5*x"], "-0.1", &[vec!["0.3*cos(x)"]], &["0.2*x/(1+x^2)"])?;
    let nu = InitialMeasure::Gaussian {
        mean: vec![0.0],
        std: 0.5,
        mass: 1.0,
    };
    let records = [0, 32, 64, 96, 128];
    let rho = forward_measure(&coeffs, &nu, &w, &McParams::new(5000, 2), &records)?;
    for r in 0..rho.records() {
        let m = rho.total_mass(r)?;
        let mean = rho.pair(r, |x| x[0])?;
        println!("t = {:.2}  mass {:.4}  first moment {:.4} ± {:.4}", rho.times[r], m.mean, mean.mean, mean.std_error);
    }
    let p0 = ExpDecayFunction::fitted(Expr::parse("0.3989422804*exp(-x^2/2)")?, 1, 2, 10.0)?;
    let space = SpaceGrid::uniform(1, 2.0, 9)?;
    let p = forward_density(&coeffs, &p0, &w, &[128], &space, &McParams::new(4000, 3))?;
    for (i, x) in space.points().iter().enumerate() {
        println!("p(1, {:5.2}) = {:.4} ± {:.4}", x[0], p.values[0][i], p.std_errors[0][i]);
    }
    Ok(())
}
