use serde::{Deserialize, Serialize};

/// `tol = A·h + B·N^{-1/2} + C·mesh^{3α-1}`, relative to the test scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for ToleranceModel {
    fn default() -> Self {
        ToleranceModel::CALIBRATED
    }
}

impl ToleranceModel {
    pub const CALIBRATED: ToleranceModel = ToleranceModel { a: 0.02, b: 1.5, c: 0.1 };

    /// `particles = 0` drops the Monte Carlo term, `h = 0` the space term.
    pub fn tolerance(&self, h: f64, particles: usize, mesh: f64, alpha: f64) -> f64 {
        let mc = if particles == 0 { 0.0 } else { self.b / (particles as f64).sqrt() };
        self.a * h + mc + self.c * mesh.powf(3.0 * alpha - 1.0)
    }

    pub fn is_valid(&self) -> bool {
        [self.a, self.b, self.c].iter().all(|v| *v >= 0.0 && v.is_finite())
    }
}
