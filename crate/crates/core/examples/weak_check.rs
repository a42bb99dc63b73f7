//! Weak-form residuals of a closed-form backward solution and of a
//! deliberately perturbed one.

use rpde::feynman_kac::{BackwardField, OperatorCoefficients, SpaceGrid};
use rpde::reference::SmoothDriver;
use rpde::verify::{check_weak_backward, TestFamily, ToleranceModel};

fn main() -> rpde::Result<()> {
    let driver = SmoothDriver::parse(&["0.8*sin(2*t)"], 1.0, 256)?;
    let w = driver.canonical_lift(0.45)?.into_inner();
    let coeffs = OperatorCoefficients::parse(1, &[], &["0"], "0", &[vec!["1"]], &["0"])?;
    let idx: Vec<usize> = (0..=256).step_by(4).collect();
    let times: Vec<f64> = idx.iter().map(|&k| w.grid().time(k)).collect();
    let space = SpaceGrid::uniform(1, 10.0, 201)?;
    let wt = 0.8 * 2f64.sin();
    let exact = |scale: f64| {
        BackwardField::tabulate(idx.clone(), times.clone(), space.clone(), "sin(x)", move |t, x| {
            let v = (x[0] + wt - 0.8 * (2.0 * t).sin()).sin();
            if t < 1.0 { scale * v } else { v }
        })
    };
    let tests = TestFamily::default().decay_functions(1, 10.0)?;
    let tol = ToleranceModel::CALIBRATED.tolerance(space.mesh(), 0, 4.0 / 256.0, 0.45);
    for (label, scale) in [("exact", 1.0), ("perturbed by 10%", 1.1)] {
        let r = check_weak_backward(&exact(scale)?, &coeffs, &w, &tests, tol)?;
        println!("{label:<18} worst residual {:.2e}  tolerance {:.2e}  pass {}", r.worst(), r.tolerance, r.pass());
    }
    Ok(())
}
