//! Davie scheme for an RDE, its dyadic self-convergence, and a rough SDE
//! driven by the joint lift of a Brownian motion and a rough path.

use rpde::rde::{build_joint_lift, self_convergence, solve_rde, solve_rough_sde, ExprFields};
use rpde::rng::Stream;
use rpde::roughpath::{brownian_lift, Grid};

fn main() -> rpde::Result<()> {
    let grid = Grid::uniform(1.0, 1 << 10)?;
    let w = brownian_lift(&mut Stream::new(1, 0), &grid, 2, 0.45, 16)?.into_inner();
    let f = ExprFields::parse(2, &[vec!["-x1", "x0"], vec!["sin(x0)", "0.3"]], &["-0.1*x0", "-0.1*x1"], 4)?;
    let x = solve_rde(&f, &w, &[1.0, 0.0])?;
    println!("X_1 = {:?}", x.final_state());
    let study = self_convergence(&f, &w, &[1.0, 0.0], 5)?;
    for (m, d) in study.meshes.iter().zip(&study.differences) {
        println!("mesh {m:.2e}  difference {d:.3e}");
    }
    println!("observed order {:?}", study.observed_order);

    // dX = 0.4 dB + cos(X) dW
    let sde = ExprFields::parse(1, &[vec!["0.4"], vec!["cos(x0)"]], &["0"], 4)?;
    let w1 = brownian_lift(&mut Stream::new(2, 0), &grid, 1, 0.45, 16)?.into_inner();
    let mut finals = Vec::new();
    for seed in 0..200 {
        let lift = build_joint_lift(&w1, &mut Stream::new(seed, 7), 1, 4)?;
        finals.push(solve_rough_sde(&sde, &lift, &[0.0], false)?.path.final_state()[0]);
    }
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    println!("rough SDE: mean of X_1 over 200 Brownian paths {mean:.4}");
    Ok(())
}
