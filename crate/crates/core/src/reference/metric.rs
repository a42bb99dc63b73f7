use crate::error::{ensure_dim, Error, Result};
use crate::roughpath::RoughPath;

/// Inhomogeneous α-Hölder distance
/// `sup |ΔW^a - ΔW^b| / |t-s|^α + sup |Δ𝕎^a - Δ𝕎^b| / |t-s|^{2α}`
/// over grid pairs, with `α` taken from `a`.
pub fn rough_metric(a: &RoughPath, b: &RoughPath) -> Result<f64> {
    ensure_dim(a.dim(), b.dim())?;
    if a.grid() != b.grid() {
        return Err(Error::InvalidGrid("rough_metric needs both paths on the same grid".into()));
    }
    let e = a.dim();
    let alpha = a.alpha();
    let times = a.grid().times();
    let n = a.steps();
    // prefix values and areas from 0 of the difference-free paths
    let prefix = |p: &RoughPath| -> (Vec<f64>, Vec<f64>) {
        let mut w = vec![0.0; (n + 1) * e];
        let mut ww = vec![0.0; (n + 1) * e * e];
        for k in 0..n {
            let (f, s) = (p.step_first(k), p.step_second(k));
            for i in 0..e {
                w[(k + 1) * e + i] = w[k * e + i] + f[i];
                for j in 0..e {
                    ww[(k + 1) * e * e + i * e + j] = ww[k * e * e + i * e + j] + s[i * e + j] + w[k * e + i] * f[j];
                }
            }
        }
        (w, ww)
    };
    let (wa, wwa) = prefix(a);
    let (wb, wwb) = prefix(b);
    let mut first: f64 = 0.0;
    let mut second: f64 = 0.0;
    let mut da = vec![0.0; e];
    let mut db = vec![0.0; e];
    for s in 0..n {
        for t in s + 1..=n {
            let h = times[t] - times[s];
            let mut g1: f64 = 0.0;
            for i in 0..e {
                da[i] = wa[t * e + i] - wa[s * e + i];
                db[i] = wb[t * e + i] - wb[s * e + i];
                g1 = g1.max((da[i] - db[i]).abs());
            }
            let mut g2: f64 = 0.0;
            for i in 0..e {
                for j in 0..e {
                    let q = i * e + j;
                    // Chen: 𝕎_{s,t} = 𝕎_{0,t} - 𝕎_{0,s} - W_{0,s}⊗W_{s,t}
                    let xa = wwa[t * e * e + q] - wwa[s * e * e + q] - wa[s * e + i] * da[j];
                    let xb = wwb[t * e * e + q] - wwb[s * e * e + q] - wb[s * e + i] * db[j];
                    g2 = g2.max((xa - xb).abs());
                }
            }
            first = first.max(g1 / h.powf(alpha));
            second = second.max(g2 / h.powf(2.0 * alpha));
        }
    }
    Ok(first + second)
}
