use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::expr::{add, mul, neg, sub, Compiled, Expr};
use crate::rde::{ExprFields, Smoothness, VectorFields};

/// Smoothness tags `C^n_b` of each coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoefficientSmoothness {
    pub sigma: Smoothness,
    pub b: Smoothness,
    pub c: Smoothness,
    pub beta: Smoothness,
    pub gamma: Smoothness,
}

impl CoefficientSmoothness {
    pub fn smooth() -> Self {
        CoefficientSmoothness {
            sigma: u8::MAX,
            b: u8::MAX,
            c: u8::MAX,
            beta: u8::MAX,
            gamma: u8::MAX,
        }
    }

    fn meets(&self, other: &CoefficientSmoothness) -> bool {
        self.sigma >= other.sigma
            && self.b >= other.b
            && self.c >= other.c
            && self.beta >= other.beta
            && self.gamma >= other.gamma
    }
}

impl Default for CoefficientSmoothness {
    fn default() -> Self {
        Self::smooth()
    }
}

/// Coefficients of `Lu = ½Tr(σσᵀD²u) + ⟨b,Du⟩ + cu` and
/// `Γ_k u = ⟨β_k,Du⟩ + γ_k u`.
///
/// `sigma[a][i]` is entry `(i, a)` of the `d × m` matrix σ, i.e. the
/// columns are stored as vector fields; likewise `beta[k][i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorCoefficients {
    dim: usize,
    sigma: Vec<Vec<Expr>>,
    b: Vec<Expr>,
    c: Expr,
    beta: Vec<Vec<Expr>>,
    gamma: Vec<Expr>,
    smoothness: CoefficientSmoothness,
}

fn check_expr(dim: usize, ex: &Expr, what: &str) -> Result<()> {
    if ex.depends_on_time() {
        return Err(Error::Config {
            field: what.to_string(),
            msg: "coefficients must not depend on t".into(),
        });
    }
    if let Some(i) = ex.max_var() {
        if i >= dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: i + 1,
            });
        }
    }
    Ok(())
}

fn parse_matrix(rows: &[Vec<&str>], d: usize) -> Result<Vec<Vec<Expr>>> {
    ensure_dim(d, rows.len())?;
    let cols = rows.first().map_or(0, |r| r.len());
    let mut out = vec![Vec::with_capacity(d); cols];
    for row in rows {
        ensure_dim(cols, row.len())?;
        for (a, s) in row.iter().enumerate() {
            out[a].push(Expr::parse(s)?);
        }
    }
    Ok(out)
}

impl OperatorCoefficients {
    /// Build from column fields: `sigma[a]` and `beta[k]` are vectors of
    /// length `d`.
    pub fn new(
        dim: usize,
        sigma: Vec<Vec<Expr>>,
        b: Vec<Expr>,
        c: Expr,
        beta: Vec<Vec<Expr>>,
        gamma: Vec<Expr>,
    ) -> Result<OperatorCoefficients> {
        ensure_dim(dim, b.len())?;
        ensure_dim(beta.len(), gamma.len())?;
        for col in sigma.iter().chain(&beta) {
            ensure_dim(dim, col.len())?;
        }
        for ex in sigma.iter().flatten() {
            check_expr(dim, ex, "sigma")?;
        }
        for ex in &b {
            check_expr(dim, ex, "b")?;
        }
        check_expr(dim, &c, "c")?;
        for ex in beta.iter().flatten() {
            check_expr(dim, ex, "beta")?;
        }
        for ex in &gamma {
            check_expr(dim, ex, "gamma")?;
        }
        Ok(OperatorCoefficients {
            dim,
            sigma,
            b,
            c,
            beta,
            gamma,
            smoothness: CoefficientSmoothness::smooth(),
        })
    }

    /// Parse from strings. `sigma` is the `d × m` matrix by rows, `beta`
    /// the `d × e` matrix by rows.
    pub fn parse(
        dim: usize,
        sigma: &[Vec<&str>],
        b: &[&str],
        c: &str,
        beta: &[Vec<&str>],
        gamma: &[&str],
    ) -> Result<OperatorCoefficients> {
        let sigma = if sigma.is_empty() { Vec::new() } else { parse_matrix(sigma, dim)? };
        let beta = if beta.is_empty() { Vec::new() } else { parse_matrix(beta, dim)? };
        let b = b.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>()?;
        let gamma = gamma.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>()?;
        Self::new(dim, sigma, b, Expr::parse(c)?, beta, gamma)
    }

    pub fn with_smoothness(mut self, smoothness: CoefficientSmoothness) -> Self {
        self.smoothness = smoothness;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn brownian_dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn rough_dim(&self) -> usize {
        self.beta.len()
    }

    pub fn sigma(&self) -> &[Vec<Expr>] {
        &self.sigma
    }

    pub fn b(&self) -> &[Expr] {
        &self.b
    }

    pub fn c(&self) -> &Expr {
        &self.c
    }

    pub fn beta(&self) -> &[Vec<Expr>] {
        &self.beta
    }

    pub fn gamma(&self) -> &[Expr] {
        &self.gamma
    }

    pub fn smoothness(&self) -> CoefficientSmoothness {
        self.smoothness
    }

    /// Whether the tags meet `needed`; logs a warning otherwise.
    pub fn check_smoothness(&self, needed: &CoefficientSmoothness, what: &str) -> bool {
        let ok = self.smoothness.meets(needed);
        if !ok {
            log::warn!(
                "{what}: coefficient tags {:?} are below the assumed {:?}; bounds are not guaranteed",
                self.smoothness,
                needed
            );
        }
        ok
    }

    /// `a = σσᵀ` as a `d × d` matrix of expressions.
    pub fn diffusion_matrix(&self) -> Vec<Vec<Expr>> {
        let d = self.dim;
        let mut a = vec![vec![Expr::zero(); d]; d];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                for col in &self.sigma {
                    *entry = add(entry.clone(), mul(col[i].clone(), col[j].clone()));
                }
            }
        }
        a
    }

    /// Coefficients of the formal adjoints `L*`, `Γ*_k`:
    /// `b̃_i = ∂_j a_{ji} − b_i`, `c̃ = ½∂_{ij}a_{ij} − div b + c`,
    /// `β̃_k = −β_k`, `γ̃_k = −div β_k + γ_k`, keeping `σ̃ = σ`.
    pub fn adjoint(&self) -> Result<OperatorCoefficients> {
        let d = self.dim;
        let a = self.diffusion_matrix();
        let mut b_adj = Vec::with_capacity(d);
        for i in 0..d {
            let mut s = Expr::zero();
            for (j, row) in a.iter().enumerate() {
                s = add(s, row[i].diff_var(j)?);
            }
            b_adj.push(sub(s, self.b[i].clone()));
        }
        let mut second = Expr::zero();
        for (i, row) in a.iter().enumerate() {
            for (j, aij) in row.iter().enumerate() {
                second = add(second, aij.diff_var(i)?.diff_var(j)?);
            }
        }
        let mut div_b = Expr::zero();
        for (i, bi) in self.b.iter().enumerate() {
            div_b = add(div_b, bi.diff_var(i)?);
        }
        let c_adj = add(sub(mul(Expr::constant(0.5), second), div_b), self.c.clone());
        let mut beta_adj = Vec::with_capacity(self.beta.len());
        let mut gamma_adj = Vec::with_capacity(self.beta.len());
        for (col, g) in self.beta.iter().zip(&self.gamma) {
            beta_adj.push(col.iter().map(|x| neg(x.clone())).collect());
            let mut div = Expr::zero();
            for (i, x) in col.iter().enumerate() {
                div = add(div, x.diff_var(i)?);
            }
            gamma_adj.push(sub(g.clone(), div));
        }
        let s = self.smoothness;
        let smoothness = CoefficientSmoothness {
            sigma: s.sigma,
            b: s.sigma.saturating_sub(1).min(s.b),
            c: s.sigma.saturating_sub(2).min(s.b.saturating_sub(1)).min(s.c),
            beta: s.beta,
            gamma: s.beta.saturating_sub(1).min(s.gamma),
        };
        Ok(OperatorCoefficients {
            dim: d,
            sigma: self.sigma.clone(),
            b: b_adj,
            c: c_adj,
            beta: beta_adj,
            gamma: gamma_adj,
            smoothness,
        })
    }

    /// `Lf = ½ a_{ij}∂_{ij}f + b·Df + c f` as an expression.
    pub fn apply_generator(&self, f: &Expr) -> Result<Expr> {
        let a = self.diffusion_matrix();
        let mut out = mul(self.c.clone(), f.clone());
        for i in 0..self.dim {
            let fi = f.diff_var(i)?;
            for (j, aij) in a[i].iter().enumerate() {
                if !aij.is_zero() {
                    out = add(out, mul(mul(Expr::constant(0.5), aij.clone()), fi.diff_var(j)?));
                }
            }
            out = add(out, mul(self.b[i].clone(), fi));
        }
        Ok(out)
    }

    /// `Γ_k f = β_k·Df + γ_k f` as an expression.
    pub fn apply_gamma(&self, k: usize, f: &Expr) -> Result<Expr> {
        let mut out = mul(self.gamma[k].clone(), f.clone());
        for (i, bi) in self.beta[k].iter().enumerate() {
            out = add(out, mul(bi.clone(), f.diff_var(i)?));
        }
        Ok(out)
    }

    /// Compile with every σ column kept, matching a joint lift with
    /// `brownian_dim()` Brownian components.
    pub fn compile(&self) -> Result<CompiledCoefficients> {
        CompiledCoefficients::new(self, false)
    }

    /// Compile with identically zero σ columns removed.
    pub fn compile_active(&self) -> Result<CompiledCoefficients> {
        CompiledCoefficients::new(self, true)
    }
}

/// Compiled coefficients; as [`VectorFields`] they are the rough-SDE
/// fields `[σ_1..σ_m, β_1..β_e]` with drift `b`.
#[derive(Clone, Debug)]
pub struct CompiledCoefficients {
    fields: ExprFields,
    m: usize,
    e: usize,
    c: Compiled,
    c_const: Option<f64>,
    gamma: Vec<Compiled>,
    dgamma: Vec<Compiled>,
    gamma_zero: bool,
    zero_order: bool,
}

impl CompiledCoefficients {
    fn new(coeffs: &OperatorCoefficients, drop_zero: bool) -> Result<CompiledCoefficients> {
        let d = coeffs.dim;
        let sigma: Vec<Vec<Expr>> = coeffs
            .sigma
            .iter()
            .filter(|col| !drop_zero || col.iter().any(|x| !x.is_zero()))
            .cloned()
            .collect();
        let m = sigma.len();
        let e = coeffs.beta.len();
        let mut cols = sigma;
        cols.extend(coeffs.beta.iter().cloned());
        let s = coeffs.smoothness;
        let tag = s.sigma.min(s.beta);
        let fields = ExprFields::new(d, cols, coeffs.b.clone(), tag)?;
        let mut dgamma = Vec::with_capacity(e * d);
        for g in &coeffs.gamma {
            for i in 0..d {
                dgamma.push(g.diff_var(i)?.compile());
            }
        }
        let gamma_zero = coeffs.gamma.iter().all(|g| g.is_zero());
        Ok(CompiledCoefficients {
            fields,
            m,
            e,
            c: coeffs.c.compile(),
            c_const: coeffs.c.as_const(),
            gamma: coeffs.gamma.iter().map(|g| g.compile()).collect(),
            dgamma,
            gamma_zero,
            zero_order: gamma_zero && coeffs.c.is_zero(),
        })
    }

    /// Number of active Brownian components.
    pub fn brownian_dim(&self) -> usize {
        self.m
    }

    pub fn rough_dim(&self) -> usize {
        self.e
    }

    /// True when `c = 0` and `γ = 0`, so every weight is one.
    pub fn unit_weights(&self) -> bool {
        self.zero_order
    }

    pub fn c_at(&self, x: &[f64]) -> f64 {
        match self.c_const {
            Some(v) => v,
            None => self.c.eval(x, 0.0),
        }
    }

    /// `∫ c dr` along a path frozen at the left point of `[t0, t1]`.
    pub(crate) fn c_integral(&self, x: &[f64], t0: f64, t1: f64) -> f64 {
        match self.c_const {
            Some(v) => v * (t1 - t0),
            None => self.c.eval(x, 0.0) * (t1 - t0),
        }
    }

    pub(crate) fn c_is_const(&self) -> Option<f64> {
        self.c_const
    }

    pub fn gamma_at(&self, x: &[f64], out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.gamma) {
            *o = g.eval(x, 0.0);
        }
    }

    /// `∂_i γ_k` at `x`, laid out `out[k·d + i]`.
    pub fn gamma_gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.dgamma) {
            *o = g.eval(x, 0.0);
        }
    }

    /// Increment of `∫γ(X) d𝐖` over one step given the joint-lift step
    /// `(z, zz)` and the field values `v` at `x`:
    /// `γ_k W^k + (Dγ_k·V_a) ℤ^{a, m+k}`.
    pub(crate) fn gamma_increment(&self, x: &[f64], v: &[f64], z: &[f64], zz: &[f64], scratch: &mut [f64]) -> f64 {
        if self.gamma_zero {
            return 0.0;
        }
        let d = self.fields.state_dim();
        let (m, e) = (self.m, self.e);
        let n = m + e;
        let mut acc = 0.0;
        for k in 0..e {
            acc += self.gamma[k].eval(x, 0.0) * z[m + k];
        }
        let mut any_area = false;
        for k in 0..e {
            for a in 0..n {
                if zz[a * n + m + k] != 0.0 {
                    any_area = true;
                }
            }
        }
        if any_area {
            self.gamma_gradient(x, scratch);
            for k in 0..e {
                let dg = &scratch[k * d..(k + 1) * d];
                for a in 0..n {
                    let area = zz[a * n + m + k];
                    if area != 0.0 {
                        let va = &v[a * d..(a + 1) * d];
                        let dot: f64 = dg.iter().zip(va).map(|(p, q)| p * q).sum();
                        acc += dot * area;
                    }
                }
            }
        }
        acc
    }
}

impl VectorFields for CompiledCoefficients {
    fn state_dim(&self) -> usize {
        self.fields.state_dim()
    }

    fn driver_dim(&self) -> usize {
        self.fields.driver_dim()
    }

    fn fields(&self, x: &[f64], out: &mut [f64]) {
        self.fields.fields(x, out)
    }

    fn field_jacobians(&self, x: &[f64], out: &mut [f64]) {
        self.fields.field_jacobians(x, out)
    }

    fn field_hessians(&self, x: &[f64], out: &mut [f64]) {
        self.fields.field_hessians(x, out)
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        self.fields.drift(x, out)
    }

    fn drift_jacobian(&self, x: &[f64], out: &mut [f64]) {
        self.fields.drift_jacobian(x, out)
    }

    fn has_drift(&self) -> bool {
        self.fields.has_drift()
    }

    fn smoothness(&self) -> Smoothness {
        self.fields.smoothness()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn eval(e: &Expr, x: &[f64]) -> f64 {
        e.eval(x, 0.0)
    }

    #[test]
    fn adjoint_of_identity_diffusion() {
        let c = OperatorCoefficients::parse(2, &[vec!["1", "0"], vec!["0", "1"]], &["0", "0"], "0", &[], &[]).unwrap();
        let adj = c.adjoint().unwrap();
        let a = adj.diffusion_matrix();
        assert_eq!(a[0][0].as_const(), Some(1.0));
        assert_eq!(a[0][1].as_const(), Some(0.0));
        assert!(adj.b().iter().all(|x| x.is_zero()));
        assert!(adj.c().is_zero());
    }

    #[test]
    fn adjoint_of_constant_transport() {
        let c = OperatorCoefficients::parse(1, &[], &["0"], "0", &[vec!["0.7", "-1.5"]], &["0", "0"]).unwrap();
        let adj = c.adjoint().unwrap();
        assert_eq!(adj.beta()[0][0].as_const(), Some(-0.7));
        assert_eq!(adj.beta()[1][0].as_const(), Some(1.5));
        assert!(adj.gamma().iter().all(|g| g.is_zero()));
    }

    #[test]
    fn adjoint_of_linear_drift() {
        // b = A x with A = [[1, 2], [-3, 0.5]]
        let c = OperatorCoefficients::parse(
            2,
            &[vec!["1", "0"], vec!["0", "1"]],
            &["x0 + 2*x1", "-3*x0 + 0.5*x1"],
            "0",
            &[],
            &[],
        )
        .unwrap();
        let adj = c.adjoint().unwrap();
        let x = [0.3, -1.1];
        assert!((eval(&adj.b()[0], &x) + (0.3 - 2.2)).abs() < 1e-14);
        assert!((eval(&adj.b()[1], &x) + (-0.9 - 0.55)).abs() < 1e-14);
        assert!((eval(adj.c(), &x) + 1.5).abs() < 1e-14);
    }

    #[test]
    fn adjoint_twice_is_identity() {
        let c = OperatorCoefficients::parse(
            2,
            &[vec!["1 + 0.2*sin(x1)", "0.1*x0"], vec!["0.3", "cos(x0)"]],
            &["-x0 + sin(x1)", "tanh(x0*x1)"],
            "-0.5*x0^2 + cos(x1)",
            &[vec!["sin(x0)", "0.5"], vec!["x0*x1", "exp(-x1^2)"]],
            &["0.3*x0", "cos(x0 + x1)"],
        )
        .unwrap();
        let twice = c.adjoint().unwrap().adjoint().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            for i in 0..2 {
                assert!((eval(&c.b()[i], &x) - eval(&twice.b()[i], &x)).abs() < 1e-10);
            }
            assert!((eval(c.c(), &x) - eval(twice.c(), &x)).abs() < 1e-10);
            for k in 0..2 {
                assert!((eval(&c.gamma()[k], &x) - eval(&twice.gamma()[k], &x)).abs() < 1e-10);
                for i in 0..2 {
                    assert!((eval(&c.beta()[k][i], &x) - eval(&twice.beta()[k][i], &x)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn adjoint_needs_derivatives() {
        let c = OperatorCoefficients::parse(1, &[vec!["abs(x)"]], &["0"], "0", &[], &[]).unwrap();
        assert!(matches!(c.adjoint(), Err(Error::MissingDerivative(_))));
    }

    #[test]
    fn time_dependent_rejected() {
        assert!(OperatorCoefficients::parse(1, &[], &["t"], "0", &[], &[]).is_err());
    }

    #[test]
    fn zero_sigma_columns_dropped() {
        let c = OperatorCoefficients::parse(1, &[vec!["0"]], &["0"], "0", &[vec!["1"]], &["0"]).unwrap();
        assert_eq!(c.compile().unwrap().brownian_dim(), 1);
        let cc = c.compile_active().unwrap();
        assert_eq!(cc.brownian_dim(), 0);
        assert_eq!(cc.driver_dim(), 1);
        assert!(cc.unit_weights());
    }
}
