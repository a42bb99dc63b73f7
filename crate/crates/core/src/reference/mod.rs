//! Smooth-driver reference solvers and the Wong–Zakai harness.

mod classical;
mod driver;
mod fd;
mod metric;
mod wong_zakai;

pub use classical::{classical_fk, FkScheme};
pub use driver::SmoothDriver;
pub use fd::{fd_backward_solve, fd_forward_solve, Boundary, FdOptions};
pub use metric::rough_metric;
pub use wong_zakai::{wong_zakai_study, WongZakaiRow, WongZakaiScenario, WongZakaiTable};
