//! Kantorovich–Rubinstein (bounded-Lipschitz) distance between weighted
//! point clouds.

use rpde::feynman_kac::MeasureSlice;
use rpde::verify::kr_distance;

fn main() -> rpde::Result<()> {
    let mu = MeasureSlice::new(1, vec![vec![0.0], vec![1.0]], vec![0.5, 0.5])?;
    let nu = MeasureSlice::new(1, vec![vec![0.2], vec![3.0]], vec![0.5, 0.5])?;
    let d = kr_distance(&mu, &nu)?;
    println!("1-d: {:.4} (exact {})", d.value(), d.exact);
    let heavier = MeasureSlice::new(1, vec![vec![0.0]], vec![1.3])?;
    println!("unequal masses: {:.4}", kr_distance(&mu, &heavier)?.value());
    let a = MeasureSlice::new(2, vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![0.5, 0.5])?;
    let b = MeasureSlice::new(2, vec![vec![0.1, 0.0], vec![1.0, 0.7]], vec![0.5, 0.5])?;
    let d = kr_distance(&a, &b)?;
    println!("2-d bounds: [{:.4}, {:.4}]", d.lower, d.upper);
    Ok(())
}
