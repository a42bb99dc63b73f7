use crate::error::{ensure_dim, Result};
use crate::expr::{Compiled, Expr};

/// Smoothness tag `C^n_b`; `u8::MAX` marks smooth (e.g. linear) fields.
pub type Smoothness = u8;

/// A family of driving fields `V_1..V_e` on `R^d` plus a drift `b`.
///
/// Layouts (all row-major, flat):
/// - `fields`: `out[k·d + i] = V_k^i(x)`
/// - `field_jacobians`: `out[(k·d + i)·d + j] = ∂_j V_k^i(x)`
/// - `field_hessians`: `out[((k·d + i)·d + j)·d + l] = ∂_j ∂_l V_k^i(x)`
/// - `drift_jacobian`: `out[i·d + j] = ∂_j b^i(x)`
pub trait VectorFields: Sync {
    fn state_dim(&self) -> usize;
    fn driver_dim(&self) -> usize;
    fn fields(&self, x: &[f64], out: &mut [f64]);
    fn field_jacobians(&self, x: &[f64], out: &mut [f64]);

    fn field_hessians(&self, x: &[f64], out: &mut [f64]) {
        let d = self.state_dim();
        let e = self.driver_dim();
        let h = 1e-5;
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        let mut jp = vec![0.0; e * d * d];
        let mut jm = vec![0.0; e * d * d];
        for l in 0..d {
            xp[l] = x[l] + h;
            xm[l] = x[l] - h;
            self.field_jacobians(&xp, &mut jp);
            self.field_jacobians(&xm, &mut jm);
            for p in 0..e * d * d {
                out[p * d + l] = (jp[p] - jm[p]) / (2.0 * h);
            }
            xp[l] = x[l];
            xm[l] = x[l];
        }
    }

    fn drift(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn drift_jacobian(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn has_drift(&self) -> bool {
        true
    }

    fn smoothness(&self) -> Smoothness {
        3
    }
}

/// `V_k(z) = A_k z + c_k`, drift `b(z) = A_0 z + c_0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFields {
    d: usize,
    matrices: Vec<Vec<f64>>,
    offsets: Vec<Vec<f64>>,
    drift_matrix: Vec<f64>,
    drift_offset: Vec<f64>,
}

impl LinearFields {
    /// `matrices[k]` is `A_k` (row-major `d×d`), `offsets[k]` is `c_k`.
    pub fn new(d: usize, matrices: Vec<Vec<f64>>, offsets: Vec<Vec<f64>>) -> Result<LinearFields> {
        ensure_dim(matrices.len(), offsets.len())?;
        for (a, c) in matrices.iter().zip(&offsets) {
            ensure_dim(d * d, a.len())?;
            ensure_dim(d, c.len())?;
        }
        Ok(LinearFields {
            d,
            matrices,
            offsets,
            drift_matrix: vec![0.0; d * d],
            drift_offset: vec![0.0; d],
        })
    }

    pub fn homogeneous(d: usize, matrices: Vec<Vec<f64>>) -> Result<LinearFields> {
        let e = matrices.len();
        LinearFields::new(d, matrices, vec![vec![0.0; d]; e])
    }

    pub fn with_drift(mut self, matrix: Vec<f64>, offset: Vec<f64>) -> Result<LinearFields> {
        ensure_dim(self.d * self.d, matrix.len())?;
        ensure_dim(self.d, offset.len())?;
        self.drift_matrix = matrix;
        self.drift_offset = offset;
        Ok(self)
    }

    pub fn matrices(&self) -> &[Vec<f64>] {
        &self.matrices
    }
}

fn affine(a: &[f64], c: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for i in 0..d {
        out[i] = c[i] + (0..d).map(|j| a[i * d + j] * x[j]).sum::<f64>();
    }
}

impl VectorFields for LinearFields {
    fn state_dim(&self) -> usize {
        self.d
    }

    fn driver_dim(&self) -> usize {
        self.matrices.len()
    }

    fn fields(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        for (k, (a, c)) in self.matrices.iter().zip(&self.offsets).enumerate() {
            affine(a, c, x, &mut out[k * d..(k + 1) * d]);
        }
    }

    fn field_jacobians(&self, _x: &[f64], out: &mut [f64]) {
        let dd = self.d * self.d;
        for (k, a) in self.matrices.iter().enumerate() {
            out[k * dd..(k + 1) * dd].copy_from_slice(a);
        }
    }

    fn field_hessians(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        affine(&self.drift_matrix, &self.drift_offset, x, out);
    }

    fn drift_jacobian(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.drift_matrix);
    }

    fn has_drift(&self) -> bool {
        self.drift_matrix.iter().chain(&self.drift_offset).any(|&v| v != 0.0)
    }

    fn smoothness(&self) -> Smoothness {
        u8::MAX
    }
}

/// Fields given by symbolic expressions; derivatives are exact.
#[derive(Clone, Debug)]
pub struct ExprFields {
    d: usize,
    e: usize,
    source: Vec<Vec<Expr>>,
    drift_source: Vec<Expr>,
    v: Vec<Compiled>,
    dv: Vec<Compiled>,
    d2v: Option<Vec<Compiled>>,
    b: Vec<Compiled>,
    db: Vec<Compiled>,
    drift_is_zero: bool,
    smoothness: Smoothness,
}

impl ExprFields {
    /// `fields[k][i] = V_k^i`, `drift[i] = b^i`.
    pub fn new(d: usize, fields: Vec<Vec<Expr>>, drift: Vec<Expr>, smoothness: Smoothness) -> Result<ExprFields> {
        ensure_dim(d, drift.len())?;
        for f in &fields {
            ensure_dim(d, f.len())?;
        }
        for ex in fields.iter().flatten().chain(&drift) {
            if let Some(i) = ex.max_var() {
                if i >= d {
                    return Err(crate::Error::DimensionMismatch { expected: d, found: i + 1 });
                }
            }
        }
        let e = fields.len();
        let flat: Vec<&Expr> = fields.iter().flatten().collect();
        let v = flat.iter().map(|x| x.compile()).collect();
        let mut dv_expr = Vec::with_capacity(e * d * d);
        for x in &flat {
            for j in 0..d {
                dv_expr.push(x.diff_var(j)?);
            }
        }
        // Second derivatives are optional: non-differentiable pieces only
        // disable the exact Hessian.
        let d2v = dv_expr
            .iter()
            .map(|x| (0..d).map(|l| x.diff_var(l).map(|h| h.compile())).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()
            .ok()
            .map(|v| v.into_iter().flatten().collect());
        let dv = dv_expr.iter().map(|x| x.compile()).collect();
        let b = drift.iter().map(|x| x.compile()).collect();
        let mut db = Vec::with_capacity(d * d);
        for x in &drift {
            for j in 0..d {
                db.push(x.diff_var(j)?.compile());
            }
        }
        let drift_is_zero = drift.iter().all(|x| x.is_zero());
        Ok(ExprFields {
            d,
            e,
            source: fields,
            drift_source: drift,
            v,
            dv,
            d2v,
            b,
            db,
            drift_is_zero,
            smoothness,
        })
    }

    /// Parse `fields[k][i]` and `drift[i]` from strings.
    pub fn parse(d: usize, fields: &[Vec<&str>], drift: &[&str], smoothness: Smoothness) -> Result<ExprFields> {
        let f = fields
            .iter()
            .map(|row| row.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let b = drift.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>()?;
        ExprFields::new(d, f, b, smoothness)
    }

    pub fn source(&self) -> &[Vec<Expr>] {
        &self.source
    }

    pub fn drift_source(&self) -> &[Expr] {
        &self.drift_source
    }
}

fn eval_all(exprs: &[Compiled], x: &[f64], out: &mut [f64]) {
    for (o, ex) in out.iter_mut().zip(exprs) {
        *o = ex.eval(x, 0.0);
    }
}

impl VectorFields for ExprFields {
    fn state_dim(&self) -> usize {
        self.d
    }

    fn driver_dim(&self) -> usize {
        self.e
    }

    fn fields(&self, x: &[f64], out: &mut [f64]) {
        eval_all(&self.v, x, out);
    }

    fn field_jacobians(&self, x: &[f64], out: &mut [f64]) {
        eval_all(&self.dv, x, out);
    }

    fn field_hessians(&self, x: &[f64], out: &mut [f64]) {
        match &self.d2v {
            Some(h) => eval_all(h, x, out),
            None => {
                let fd = FiniteDifferenceHessian(self);
                fd.field_hessians(x, out)
            }
        }
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        eval_all(&self.b, x, out);
    }

    fn drift_jacobian(&self, x: &[f64], out: &mut [f64]) {
        eval_all(&self.db, x, out);
    }

    fn has_drift(&self) -> bool {
        !self.drift_is_zero
    }

    fn smoothness(&self) -> Smoothness {
        self.smoothness
    }
}

/// Forwards everything except the Hessian, which falls back to the
/// trait's central differences.
struct FiniteDifferenceHessian<'a, F: VectorFields>(&'a F);

impl<F: VectorFields> VectorFields for FiniteDifferenceHessian<'_, F> {
    fn state_dim(&self) -> usize {
        self.0.state_dim()
    }
    fn driver_dim(&self) -> usize {
        self.0.driver_dim()
    }
    fn fields(&self, x: &[f64], out: &mut [f64]) {
        self.0.fields(x, out)
    }
    fn field_jacobians(&self, x: &[f64], out: &mut [f64]) {
        self.0.field_jacobians(x, out)
    }
}

/// The same fields with the drift negated; solving against the reversed
/// driver with these runs the flow backwards.
pub struct Reversed<'a, F: ?Sized>(pub &'a F);

impl<F: VectorFields + ?Sized> VectorFields for Reversed<'_, F> {
    fn state_dim(&self) -> usize {
        self.0.state_dim()
    }
    fn driver_dim(&self) -> usize {
        self.0.driver_dim()
    }
    fn fields(&self, x: &[f64], out: &mut [f64]) {
        self.0.fields(x, out)
    }
    fn field_jacobians(&self, x: &[f64], out: &mut [f64]) {
        self.0.field_jacobians(x, out)
    }
    fn field_hessians(&self, x: &[f64], out: &mut [f64]) {
        self.0.field_hessians(x, out)
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        self.0.drift(x, out);
        out.iter_mut().for_each(|v| *v = -*v);
    }
    fn drift_jacobian(&self, x: &[f64], out: &mut [f64]) {
        self.0.drift_jacobian(x, out);
        out.iter_mut().for_each(|v| *v = -*v);
    }
    fn has_drift(&self) -> bool {
        self.0.has_drift()
    }
    fn smoothness(&self) -> Smoothness {
        self.0.smoothness()
    }
}

/// State `(x, J)` with `G_k(x, J) = (V_k(x), DV_k(x) J)` and drift
/// `(b(x), Db(x) J)`, `J` a row-major `d×d` matrix. Solving this system
/// from `(x, I)` yields the flow together with its Jacobian.
pub struct Augmented<'a, F: ?Sized>(pub &'a F);

impl<F: VectorFields + ?Sized> Augmented<'_, F> {
    fn base_dim(&self) -> usize {
        self.0.state_dim()
    }
}

impl<F: VectorFields + ?Sized> VectorFields for Augmented<'_, F> {
    fn state_dim(&self) -> usize {
        let d = self.base_dim();
        d + d * d
    }

    fn driver_dim(&self) -> usize {
        self.0.driver_dim()
    }

    fn fields(&self, z: &[f64], out: &mut [f64]) {
        let d = self.base_dim();
        let e = self.0.driver_dim();
        let n = d + d * d;
        let (x, j) = z.split_at(d);
        let mut v = vec![0.0; e * d];
        let mut dv = vec![0.0; e * d * d];
        self.0.fields(x, &mut v);
        self.0.field_jacobians(x, &mut dv);
        for k in 0..e {
            let o = &mut out[k * n..(k + 1) * n];
            o[..d].copy_from_slice(&v[k * d..(k + 1) * d]);
            matmul(&dv[k * d * d..(k + 1) * d * d], j, d, &mut o[d..]);
        }
    }

    fn field_jacobians(&self, z: &[f64], out: &mut [f64]) {
        // ∂(V_k, DV_k J)/∂(x, J): top-left DV_k, bottom-left D²V_k[·]J,
        // bottom-right (I ⊗ DV_k) acting on J row-major.
        let d = self.base_dim();
        let e = self.0.driver_dim();
        let n = d + d * d;
        let (x, j) = z.split_at(d);
        let mut dv = vec![0.0; e * d * d];
        let mut h = vec![0.0; e * d * d * d];
        self.0.field_jacobians(x, &mut dv);
        self.0.field_hessians(x, &mut h);
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..e {
            let o = &mut out[k * n * n..(k + 1) * n * n];
            let a = &dv[k * d * d..(k + 1) * d * d];
            let hk = &h[k * d * d * d..(k + 1) * d * d * d];
            for i in 0..d {
                for l in 0..d {
                    o[i * n + l] = a[i * d + l];
                }
            }
            // row (d + p·d + q) is (DV_k J)^{pq} = Σ_r ∂_r V^p J^{rq}
            for p in 0..d {
                for q in 0..d {
                    let row = d + p * d + q;
                    for l in 0..d {
                        let mut s = 0.0;
                        for r in 0..d {
                            s += hk[(p * d + r) * d + l] * j[r * d + q];
                        }
                        o[row * n + l] = s;
                    }
                    for r in 0..d {
                        o[row * n + d + r * d + q] = a[p * d + r];
                    }
                }
            }
        }
    }

    fn drift(&self, z: &[f64], out: &mut [f64]) {
        let d = self.base_dim();
        let (x, j) = z.split_at(d);
        self.0.drift(x, &mut out[..d]);
        let mut db = vec![0.0; d * d];
        self.0.drift_jacobian(x, &mut db);
        matmul(&db, j, d, &mut out[d..]);
    }

    fn has_drift(&self) -> bool {
        self.0.has_drift()
    }

    fn smoothness(&self) -> Smoothness {
        self.0.smoothness().saturating_sub(1)
    }
}

pub(crate) fn matmul(a: &[f64], b: &[f64], d: usize, out: &mut [f64]) {
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = (0..d).map(|r| a[i * d + r] * b[r * d + j]).sum();
        }
    }
}

/// Largest relative mismatch between `field_jacobians` and central
/// differences of `fields` (step `h`) at `x`.
pub fn jacobian_consistency<F: VectorFields + ?Sized>(fields: &F, x: &[f64], h: f64) -> f64 {
    let d = fields.state_dim();
    let e = fields.driver_dim();
    let mut jac = vec![0.0; e * d * d];
    fields.field_jacobians(x, &mut jac);
    let mut vp = vec![0.0; e * d];
    let mut vm = vec![0.0; e * d];
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    let mut worst: f64 = 0.0;
    for j in 0..d {
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        fields.fields(&xp, &mut vp);
        fields.fields(&xm, &mut vm);
        for k in 0..e {
            for i in 0..d {
                let fd = (vp[k * d + i] - vm[k * d + i]) / (2.0 * h);
                let an = jac[(k * d + i) * d + j];
                worst = worst.max((fd - an).abs() / (1.0 + an.abs()));
            }
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rotation_like() -> ExprFields {
        ExprFields::parse(
            2,
            &[vec!["sin(x1)", "cos(x0)*x1"], vec!["tanh(x0 - x1)", "exp(-x0^2)"]],
            &["0.5*x0", "-x1^3"],
            3,
        )
        .unwrap()
    }

    #[test]
    fn dimension_checks() {
        assert!(ExprFields::parse(1, &[vec!["x1"]], &["0"], 3).is_err());
        assert!(ExprFields::parse(2, &[vec!["x0"]], &["0", "0"], 3).is_err());
        assert!(LinearFields::new(2, vec![vec![1.0; 3]], vec![vec![0.0; 2]]).is_err());
    }

    #[test]
    fn exact_hessian_matches_finite_differences() {
        let f = rotation_like();
        let x = [0.3, -0.7];
        let mut exact = vec![0.0; 16];
        let mut fd = vec![0.0; 16];
        f.field_hessians(&x, &mut exact);
        FiniteDifferenceHessian(&f).field_hessians(&x, &mut fd);
        for (a, b) in exact.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn augmented_jacobian_matches_finite_differences() {
        let f = rotation_like();
        let aug = Augmented(&f);
        let z = [0.3, -0.7, 1.0, 0.2, -0.1, 0.9];
        assert!(jacobian_consistency(&aug, &z, 1e-5) < 1e-6);
    }

    proptest! {
        #[test]
        fn derivative_evaluators_consistent(x0 in -2.0f64..2.0, x1 in -2.0f64..2.0) {
            let f = rotation_like();
            prop_assert!(jacobian_consistency(&f, &[x0, x1], 1e-5) < 1e-3);
            let lin = LinearFields::new(2, vec![vec![1.0, 2.0, -0.5, 0.3]], vec![vec![0.1, 0.2]]).unwrap();
            prop_assert!(jacobian_consistency(&lin, &[x0, x1], 1e-5) < 1e-3);
        }
    }
}
