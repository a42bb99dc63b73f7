//! Brownian and piecewise-linear lifts, Chen's relation, Hölder norms and
//! the greedy counter of a Hölder control.

use rpde::rng::Stream;
use rpde::roughpath::{brownian_lift, chen_compose, greedy_count, holder_control, holder_norm, lift_piecewise_linear, Grid};

fn main() -> rpde::Result<()> {
    let grid = Grid::uniform(1.0, 256)?;
    let w = brownian_lift(&mut Stream::new(42, 0), &grid, 2, 0.45, 16)?;
    let whole = w.increment(0, 256);
    let split = chen_compose(&w.increment(0, 100), &w.increment(100, 256))?;
    println!("W_01 = {:?}", whole.first);
    println!("area  = {:.6}", 0.5 * (whole.second[1] - whole.second[2]));
    println!("chen gap = {:.1e}", (split.second[1] - whole.second[1]).abs());
    println!("geometricity defect = {:.1e}", w.geometricity_defect());
    let h = holder_norm(&w, None);
    println!("holder norms: {:.3} {:.3}", h.first_level, h.second_level);
    let omega = holder_control(&w);
    for a in [0.5, 1.0, 2.0] {
        let rec = greedy_count(&grid, &omega, a, 0, 256)?;
        println!("N_a for a = {a}: {}", rec.count);
    }
    let samples: Vec<Vec<f64>> = grid.times().iter().map(|t| vec![*t, t * t]).collect();
    let p = lift_piecewise_linear(&grid, &samples, 0.5)?;
    let inc = p.increment(0, 256);
    println!("signed area of (t, t^2) against its chord: {:.6}", 0.5 * (inc.second[1] - inc.second[2]));
    Ok(())
}
