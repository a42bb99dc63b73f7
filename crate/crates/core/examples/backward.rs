//! Monte Carlo solution of a backward rough PDE on a space grid.

use rpde::expr::Expr;
use rpde::feynman_kac::{backward_field, McParams, OperatorCoefficients, SpaceGrid};
use rpde::rng::Stream;
use rpde::roughpath::{brownian_lift, Grid};

fn main() -> rpde::Result<()> {
    let grid = Grid::uniform(1.0, 128)?;
    let w = brownian_lift(&mut Stream::new(5, 0), &grid, 1, 0.45, 16)?.into_inner();
    let coeffs = OperatorCoefficients::parse(1, &[vec!["0.6"]], &["-0.3*x"], "0", &[vec!["0.4"]], &["0.3*sin(x)"])?;
    let g = Expr::parse("exp(-x^2/2)")?;
    let space = SpaceGrid::uniform(1, 4.0, 17)?;
    let u = backward_field(&coeffs, &g, &w, &[0, 64, 128], &space, &McParams::new(2000, 1))?;
    for (p, x) in space.points().iter().enumerate() {
        println!("x = {:5.2}  u(0,x) = {:.4} ± {:.4}", x[0], u.values[0][p], u.std_errors[0][p]);
    }
    let out = std::env::temp_dir().join("rpde_backward.csv");
    u.write_csv(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}
