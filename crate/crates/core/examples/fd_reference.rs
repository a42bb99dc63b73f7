//! Finite-difference reference against Feynman–Kac Monte Carlo for a smooth
//! driver.

use rpde::expr::Expr;
use rpde::feynman_kac::{backward_value, McParams, OperatorCoefficients, SpaceGrid};
use rpde::reference::{classical_fk, fd_backward_solve, Boundary, FdOptions, FkScheme, SmoothDriver};

fn main() -> rpde::Result<()> {
    let coeffs = OperatorCoefficients::parse(1, &[vec!["0.7"]], &["-0.2*x"], "0.1", &[vec!["0.5"]], &["0.2*cos(x)"])?;
    let driver = SmoothDriver::parse(&["sin(3*t)"], 1.0, 128)?;
    let g = Expr::parse("exp(-x^2/2)")?;
    let opts = FdOptions {
        space: SpaceGrid::uniform(1, 10.0, 401)?,
        time_steps: 800,
        record: vec![0.0],
        boundary: Boundary::Extrapolate,
    };
    let fd = fd_backward_solve(&coeffs, &g, &driver, &opts)?;
    let lift = driver.canonical_lift(0.5)?.into_inner();
    let mc = McParams::new(20_000, 4);
    for x in [-1.0, 0.0, 1.0] {
        let rough = backward_value(&coeffs, &g, 0.0, &[x], &lift, &mc)?;
        let em = classical_fk(&coeffs, &g, 0.0, &[x], &driver, &mc, FkScheme::EulerMaruyama)?;
        println!(
            "x = {x:4.1}  fd {:.5}  rough MC {:.5} ± {:.5}  classical MC {:.5} ± {:.5}",
            fd.interpolate(0, &[x]),
            rough.mean,
            rough.std_error,
            em.mean,
            em.std_error
        );
    }
    Ok(())
}
