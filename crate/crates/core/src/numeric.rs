//! Scalar numerics: adaptive Gauss–Kronrod quadrature, bracketed root
//! finding, damped fixed-point iteration and deterministic summation.

use crate::error::{Error, Result};

/// 15-point Kronrod nodes on [-1, 1] (positive half; symmetric).
const KRONROD_X: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];

const KRONROD_W: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];

/// Embedded 7-point Gauss weights (nonzero at every other Kronrod node).
const GAUSS_W: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    // non-finite values at (transformed) endpoints of convergent integrals
    // are vanishing-limit artifacts; treat them as zero
    let eval = |x: f64| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for (i, (&x, &w)) in KRONROD_X.iter().zip(KRONROD_W.iter()).enumerate() {
        let (fl, fr) = (eval(c - h * x), eval(c + h * x));
        let pair = if x == 0.0 { fl } else { fl + fr };
        kronrod += w * pair;
        if i % 2 == 1 {
            gauss += GAUSS_W[i / 2] * pair;
        }
    }
    (kronrod * h, (kronrod - gauss).abs() * h)
}

/// Adaptive quadrature of `f` over the finite interval `[a, b]`.
///
/// Subdivides until the summed Kronrod error estimate drops below
/// `rel_tol` times the integral magnitude (plus a tiny absolute floor).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    // (a, b, value, err)
    let (v0, e0) = gk15(&f, a, b);
    let mut segments = vec![(a, b, v0, e0)];
    let abs_floor = 1e-300;
    for _ in 0..2000 {
        let total: f64 = segments.iter().map(|s| s.2).sum();
        let err: f64 = segments.iter().map(|s| s.3).sum();
        if err <= rel_tol * total.abs().max(abs_floor) {
            return Ok(total);
        }
        // split the worst segment
        let (idx, _) = segments
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .3.total_cmp(&b.1 .3))
            .unwrap();
        let (sa, sb, _, _) = segments.swap_remove(idx);
        let mid = 0.5 * (sa + sb);
        if mid <= sa || mid >= sb {
            // interval exhausted at f64 resolution; keep best effort
            let total: f64 = segments.iter().map(|s| s.2).sum();
            return Ok(total + gk15(&f, sa, sb).0);
        }
        let (vl, el) = gk15(&f, sa, mid);
        let (vr, er) = gk15(&f, mid, sb);
        segments.push((sa, mid, vl, el));
        segments.push((mid, sb, vr, er));
    }
    let total: f64 = segments.iter().map(|s| s.2).sum();
    let err: f64 = segments.iter().map(|s| s.3).sum();
    let achieved = err / total.abs().max(abs_floor);
    if achieved <= rel_tol * 100.0 {
        Ok(total)
    } else {
        Err(Error::QuadratureNonConvergence { achieved })
    }
}

/// Quadrature over `[a, inf)` via the substitution x = a + t/(1-t)^2,
/// which keeps integrands decaying at least as fast as x^-1.5 regular.
pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: F, a: f64, rel_tol: f64) -> Result<f64> {
    integrate(
        |t| {
            let om = 1.0 - t;
            let x = a + t / (om * om);
            f(x) * (1.0 + t) / (om * om * om)
        },
        0.0,
        1.0,
        rel_tol,
    )
}

/// Quadrature over `(-inf, b]`.
pub fn integrate_from_neg_inf<F: Fn(f64) -> f64>(f: F, b: f64, rel_tol: f64) -> Result<f64> {
    integrate(
        |t| {
            let om = 1.0 - t;
            let x = b - t / (om * om);
            f(x) * (1.0 + t) / (om * om * om)
        },
        0.0,
        1.0,
        rel_tol,
    )
}

/// Bisection for `f(x) = 0` on a bracketing interval, refined by a secant
/// polish so exact roots representable in f64 come back with residual 0.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::NoRoot(format!(
            "no sign change on [{lo}, {hi}] (f: {flo:.3e} .. {fhi:.3e})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
        if (hi - lo) <= rel_tol * mid.abs() {
            break;
        }
    }
    // secant polish inside the bracket
    let (mut x0, mut f0, mut x1, mut f1) = (lo, flo, hi, fhi);
    for _ in 0..60 {
        if f1 == f0 {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        if !(lo..=hi).contains(&x2) {
            break;
        }
        let f2 = f(x2);
        if f2 == 0.0 {
            return Ok(x2);
        }
        if (x2 - x1).abs() <= f64::EPSILON * x2.abs() {
            return Ok(x2);
        }
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f2;
    }
    Ok(if f1.abs() < f0.abs() { x1 } else { x0 })
}

/// Expands `hi` geometrically until `f` changes sign, then bisects.
pub fn bisect_expanding<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi0: f64,
    cap: f64,
    rel_tol: f64,
) -> Result<f64> {
    let flo = f(lo);
    if flo == 0.0 {
        return Ok(lo);
    }
    let mut hi = hi0;
    for _ in 0..256 {
        let fhi = f(hi);
        if fhi == 0.0 {
            return Ok(hi);
        }
        if fhi.signum() != flo.signum() {
            return bisect(f, lo, hi, rel_tol);
        }
        if hi >= cap {
            return Err(Error::NoRoot(format!("no sign change up to cap {cap:.3e}")));
        }
        hi = (hi * 2.0).min(cap);
    }
    Err(Error::NoRoot("bracket expansion exhausted".into()))
}

/// Damped fixed-point iteration x <- (1-w) x + w g(x).
pub fn fixed_point<G: Fn(f64) -> Result<f64>>(
    g: G,
    x0: f64,
    damping: f64,
    rel_tol: f64,
    max_iters: usize,
) -> Result<f64> {
    let mut x = x0;
    for _ in 0..max_iters {
        let gx = g(x)?;
        let next = (1.0 - damping) * x + damping * gx;
        if !next.is_finite() || next <= 0.0 {
            return Err(Error::NonConvergence { iters: max_iters });
        }
        if (next - x).abs() <= rel_tol * x.abs() {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NonConvergence { iters: max_iters })
}

/// Pairwise summation; deterministic and accurate for long vectors.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n if n <= 8 => {
            let mut s = 0.0;
            for x in v {
                s += x;
            }
            s
        }
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

/// Neumaier compensated running sum.
#[derive(Clone, Copy, Default)]
pub struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// FNV-1a 64-bit hash; used for stable config and family keys.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Ordinary least-squares slope of y against x.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}
