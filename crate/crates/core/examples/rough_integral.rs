//! Rough integral of a controlled path and the dyadic convergence of its
//! compensated sums.

use std::sync::Arc;

use rpde::controlled::ControlledPath;
use rpde::rng::Stream;
use rpde::roughpath::{brownian_lift, Grid};

fn main() -> rpde::Result<()> {
    let grid = Grid::uniform(1.0, 1 << 12)?;
    let w = Arc::new(brownian_lift(&mut Stream::new(3, 0), &grid, 1, 0.45, 8)?.into_inner());
    // Y = cos(W), Y' = -sin(W); the integral is sin(W_1) - sin(W_0)
    let y = ControlledPath::from_reference(w.clone()).compose_smooth(
        (1, 1),
        |v| vec![v[0].cos()],
        |v| vec![-v[0].sin()],
    )?;
    let r = y.rough_integral_levels(0.0, 1.0, 7)?;
    let w1 = w.increment(0, w.steps()).first[0];
    println!("integral {:.8}, exact {:.8}", r.value[0], w1.sin());
    for (m, d) in r.report.meshes.iter().zip(&r.report.differences) {
        println!("mesh {m:.2e}  successive difference {d:.3e}");
    }
    println!("observed order {:?}", r.report.observed_order);
    let n = y.controlled_norm(Some(64));
    println!("controlled seminorm {:.3}", n.seminorm());
    Ok(())
}
