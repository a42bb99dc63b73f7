use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::expr::{add, call, mul, powi, sub, Expr, Func};
use crate::feynman_kac::ExpDecayFunction;

/// Bundled finite test-function families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TestFamily {
    /// `P(x-a)·exp(-κ√(1+|x-a|²))`, a `C³_exp` family.
    ExpWindowed { kappa: f64 },
    /// `1` and `P(x-a)·exp(-|x-a|²/2)`, a `C³_b` family.
    GaussWindowed,
}

impl Default for TestFamily {
    fn default() -> Self {
        TestFamily::ExpWindowed { kappa: 3.0 }
    }
}

fn centres(dim: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![-1.0], vec![0.0], vec![1.0]],
        2 => vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]],
        _ => {
            let mut v = vec![vec![0.0; dim]];
            v.push(vec![0.5; dim]);
            v
        }
    }
}

/// `|x - a|²` as an expression.
fn squared_distance(a: &[f64]) -> Expr {
    a.iter().enumerate().fold(Expr::zero(), |s, (i, ai)| {
        add(s, powi(sub(Expr::var(i), Expr::constant(*ai)), 2))
    })
}

fn windowed(dim: usize, window: impl Fn(&[f64]) -> Expr) -> Vec<Expr> {
    let mut out = Vec::new();
    for a in centres(dim) {
        let w = window(&a);
        out.push(w.clone());
        out.push(mul(sub(Expr::var(0), Expr::constant(a[0])), w));
    }
    out
}

impl TestFamily {
    pub fn functions(&self, dim: usize) -> Vec<Expr> {
        match *self {
            TestFamily::ExpWindowed { kappa } => windowed(dim, |a| {
                let r = call(Func::Sqrt, add(Expr::constant(1.0), squared_distance(a)));
                call(Func::Exp, mul(Expr::constant(-kappa), r))
            }),
            TestFamily::GaussWindowed => {
                let mut v = vec![Expr::constant(1.0)];
                v.extend(windowed(dim, |a| {
                    call(Func::Exp, mul(Expr::constant(-0.5), squared_distance(a)))
                }));
                v
            }
        }
    }

    /// The family as order-3 decay functions, constants fitted on the box.
    pub fn decay_functions(&self, dim: usize, half_width: f64) -> Result<Vec<ExpDecayFunction>> {
        self.functions(dim)
            .into_iter()
            .map(|f| {
                let mut g = ExpDecayFunction::new(f, dim, 3, 1.0)?;
                let c = g.fit_constant(half_width, 1e4).unwrap_or(1e4);
                g = ExpDecayFunction::new(g.expr().clone(), dim, 3, c)?;
                Ok(g)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_sizes_and_values() {
        let f = TestFamily::default().functions(1);
        assert_eq!(f.len(), 6);
        assert!((f[2].eval(&[0.0], 0.0) - (-3.0f64).exp()).abs() < 1e-15);
        let g = TestFamily::GaussWindowed.functions(2);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0].eval(&[5.0, 5.0], 0.0), 1.0);
    }

    #[test]
    fn exp_family_decays() {
        for f in TestFamily::default().decay_functions(1, 8.0).unwrap() {
            assert!(f.check_decay(8.0));
            assert!(f.eval(&[10.0]) < 1e-9);
        }
    }
}
