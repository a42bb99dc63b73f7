use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Result};
use crate::feynman_kac::MeasureSlice;

/// Kantorovich–Rubinstein distance `sup { ∫f d(μ-ν) : max(‖f‖_∞, ‖Df‖_∞) <= 1 }`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrDistance {
    pub lower: f64,
    pub upper: f64,
    /// `lower == upper` is the exact value (always in one dimension).
    pub exact: bool,
}

impl KrDistance {
    /// The exact value, or the upper bound when only bounds are known.
    pub fn value(&self) -> f64 {
        if self.exact {
            self.lower
        } else {
            self.upper
        }
    }
}

/// Concave piecewise-linear function on `[-1, 1]` given by its knots.
#[derive(Clone, Debug)]
struct Concave {
    x: Vec<f64>,
    v: Vec<f64>,
}

impl Concave {
    fn eval(&self, y: f64) -> f64 {
        let y = y.clamp(-1.0, 1.0);
        let i = self.x.partition_point(|&u| u <= y);
        if i == 0 {
            return self.v[0];
        }
        if i >= self.x.len() {
            return self.v[self.x.len() - 1];
        }
        let (x0, x1) = (self.x[i - 1], self.x[i]);
        let f = if x1 > x0 { (y - x0) / (x1 - x0) } else { 0.0 };
        self.v[i - 1] + f * (self.v[i] - self.v[i - 1])
    }

    fn argmax(&self) -> (f64, f64) {
        let mut best = 0;
        for i in 1..self.v.len() {
            if self.v[i] > self.v[best] {
                best = i;
            }
        }
        (self.x[best], self.v[best])
    }

    /// `y ↦ max_{|z-y| <= δ, |z| <= 1} V(z)`.
    fn dilate(&self, delta: f64) -> Concave {
        if delta <= 0.0 {
            return self.clone();
        }
        let (ys, vs) = self.argmax();
        let mut cand = vec![-1.0, 1.0, ys - delta, ys + delta];
        for &x in &self.x {
            if x <= ys {
                cand.push(x - delta);
            }
            if x >= ys {
                cand.push(x + delta);
            }
        }
        cand.retain(|c| (-1.0..=1.0).contains(c));
        cand.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cand.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let v = cand
            .iter()
            .map(|&y| {
                if y + delta < ys {
                    self.eval(y + delta)
                } else if y - delta > ys {
                    self.eval(y - delta)
                } else {
                    vs
                }
            })
            .collect();
        Concave { x: cand, v }
    }

    fn add_linear(&mut self, slope: f64) {
        for (x, v) in self.x.iter().zip(self.v.iter_mut()) {
            *v += slope * x;
        }
    }
}

/// Exact one-dimensional value `max Σ s_i f(x_i)` over `|f| <= 1`,
/// `|f(x_{i+1}) - f(x_i)| <= x_{i+1} - x_i`, for sorted distinct `x`.
fn exact_1d(x: &[f64], s: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let mut v = Concave {
        x: vec![-1.0, 1.0],
        v: vec![-s[0], s[0]],
    };
    for i in 1..x.len() {
        v = v.dilate(x[i] - x[i - 1]);
        v.add_linear(s[i]);
    }
    v.argmax().1.max(0.0)
}

/// Signed atoms `μ - ν` merged on identical points and sorted.
fn signed_atoms(mu: &MeasureSlice, nu: &MeasureSlice) -> (Vec<f64>, Vec<f64>) {
    let mut atoms: Vec<(f64, f64)> = mu
        .points
        .iter()
        .zip(&mu.masses)
        .map(|(p, m)| (p[0], *m))
        .chain(nu.points.iter().zip(&nu.masses).map(|(p, m)| (p[0], -*m)))
        .collect();
    atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut x: Vec<f64> = Vec::with_capacity(atoms.len());
    let mut s: Vec<f64> = Vec::with_capacity(atoms.len());
    for (p, m) in atoms {
        if x.last() == Some(&p) {
            *s.last_mut().unwrap() += m;
        } else {
            x.push(p);
            s.push(m);
        }
    }
    (x, s)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Upper bound from a feasible transport plan: atoms matched monotonically
/// along the first coordinate at cost `min(|x-y|, 2)`, unmatched mass at
/// cost 1.
fn coupling_upper(mu: &MeasureSlice, nu: &MeasureSlice) -> f64 {
    let order = |m: &MeasureSlice| {
        let mut idx: Vec<usize> = (0..m.points.len()).collect();
        idx.sort_by(|&a, &b| m.points[a][0].partial_cmp(&m.points[b][0]).unwrap());
        idx
    };
    let (ia, ib) = (order(mu), order(nu));
    let (mut i, mut j) = (0, 0);
    let mut ra = ia.first().map_or(0.0, |&k| mu.masses[k]);
    let mut rb = ib.first().map_or(0.0, |&k| nu.masses[k]);
    let mut cost = 0.0;
    while i < ia.len() && j < ib.len() {
        let m = ra.min(rb);
        cost += m * dist(&mu.points[ia[i]], &nu.points[ib[j]]).min(2.0);
        ra -= m;
        rb -= m;
        if ra <= 0.0 {
            i += 1;
            ra = ia.get(i).map_or(0.0, |&k| mu.masses[k]);
        }
        if rb <= 0.0 {
            j += 1;
            rb = ib.get(j).map_or(0.0, |&k| nu.masses[k]);
        }
    }
    let rest_a: f64 = ra + ia.iter().skip(i + 1).map(|&k| mu.masses[k]).sum::<f64>();
    let rest_b: f64 = rb + ib.iter().skip(j + 1).map(|&k| nu.masses[k]).sum::<f64>();
    let rest_a = if i < ia.len() { rest_a } else { 0.0 };
    let rest_b = if j < ib.len() { rest_b } else { 0.0 };
    cost + rest_a + rest_b
}

/// Lower bound from a fixed dictionary of unit `C¹_b` functions:
/// constants, `tanh(⟨u,x⟩ - c)` and `sin(⟨u,x⟩ + φ)` for unit `u`.
fn dictionary_lower(mu: &MeasureSlice, nu: &MeasureSlice) -> f64 {
    let d = mu.dim;
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    if d == 2 {
        for k in 0..16 {
            let a = std::f64::consts::PI * k as f64 / 16.0;
            dirs.push(vec![a.cos(), a.sin()]);
        }
    } else {
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            dirs.push(e);
        }
        let r = 1.0 / (d as f64).sqrt();
        dirs.push(vec![r; d]);
    }
    let pair = |f: &dyn Fn(&[f64]) -> f64| -> f64 {
        let a: f64 = mu.points.iter().zip(&mu.masses).map(|(p, m)| m * f(p)).sum();
        let b: f64 = nu.points.iter().zip(&nu.masses).map(|(p, m)| m * f(p)).sum();
        (a - b).abs()
    };
    let mut best = pair(&|_| 1.0);
    for u in &dirs {
        let proj = |p: &[f64]| p.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        for k in -20..=20 {
            let c = 0.5 * k as f64;
            best = best.max(pair(&|p| (proj(p) - c).tanh()));
        }
        for k in 0..8 {
            let phi = std::f64::consts::PI * k as f64 / 8.0;
            best = best.max(pair(&|p| (proj(p) + phi).sin()));
        }
    }
    best
}

/// KR distance between finite atomic measures: exact in one dimension
/// (for any total masses), a bound pair otherwise.
pub fn kr_distance(mu: &MeasureSlice, nu: &MeasureSlice) -> Result<KrDistance> {
    ensure_dim(mu.dim, nu.dim)?;
    MeasureSlice::new(mu.dim, mu.points.clone(), mu.masses.clone())?;
    MeasureSlice::new(nu.dim, nu.points.clone(), nu.masses.clone())?;
    if mu.dim == 1 {
        let (x, s) = signed_atoms(mu, nu);
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let v = exact_1d(&x, &s).max(exact_1d(&x, &neg));
        return Ok(KrDistance {
            lower: v,
            upper: v,
            exact: true,
        });
    }
    let lower = dictionary_lower(mu, nu);
    let upper = coupling_upper(mu, nu).min(coupling_upper(nu, mu)).max(lower);
    Ok(KrDistance {
        lower,
        upper,
        exact: false,
    })
}
