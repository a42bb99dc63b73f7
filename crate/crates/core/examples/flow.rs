//! Flow of an RDE, its inverse through the reversed driver, and Liouville's
//! formula for the Jacobian determinant.

use rpde::rde::{det_jacobian, solve_flow, ExprFields};
use rpde::reference::SmoothDriver;

fn main() -> rpde::Result<()> {
    let driver = SmoothDriver::parse(&["sin(4*t)", "t^2 - t"], 1.0, 1 << 10)?;
    let w = driver.canonical_lift(0.5)?.into_inner();
    let f = ExprFields::parse(2, &[vec!["sin(x1)", "0.5*x0"], vec!["0.3*x0*x1", "cos(x0)"]], &["0", "0"], 4)?;
    let points = vec![vec![0.0, 0.0], vec![0.5, -0.3], vec![-1.0, 1.0]];
    let flow = solve_flow(&f, &w, &points)?;
    for (x, y) in flow.points.iter().zip(&flow.forward) {
        println!("{x:?} -> {y:?}");
    }
    println!("roundtrip error {:.2e}", flow.roundtrip_error());
    println!("determinants {:?}", flow.det);
    let det = det_jacobian(&f, &w, &[0.5, -0.3])?;
    println!("Liouville vs augmented Jacobian: max relative gap {:.2e}", det.max_relative_gap());
    Ok(())
}
