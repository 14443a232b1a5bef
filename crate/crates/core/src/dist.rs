//! Parametric step-size distributions: exact tails, window masses,
//! truncated moments, deterministic sampling, and the tilt-and-truncate
//! transform.
//!
//! All families expose closed-form right tails. Moment pieces use closed
//! forms where the family admits them and adaptive quadrature otherwise.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numeric::{self, integrate, integrate_to_inf};
use crate::rng::CounterRng;

const QUAD_TOL: f64 = 1e-11;

/// How `standardize` rescales a family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StandardizeMode {
    /// Leave the family untouched.
    None,
    /// Shift to mean zero and scale to unit variance.
    Full,
    /// Shift to mean zero only (for infinite-variance regimes).
    CenterOnly,
}

#[derive(Clone, Debug)]
pub enum Family {
    Pareto {
        alpha: f64,
        x_min: f64,
    },
    /// Mixture: `w_left` on a mirrored Pareto(alpha_left) left tail,
    /// `w_right` on a Pareto(beta_right) right tail, remaining mass
    /// uniform on [-x_min, x_min].
    TwoSidedStable {
        alpha_left: f64,
        beta_right: f64,
        w_left: f64,
        w_right: f64,
        x_min: f64,
    },
    /// Tail x^rho * exp(-c log^beta x) on [1, inf), beta > 1, rho <= 0.
    LognormalHazard {
        beta: f64,
        c: f64,
        rho: f64,
    },
    /// Tail exp(-c x^beta) on [0, inf), beta in (0,1).
    WeibullHazard {
        beta: f64,
        c: f64,
    },
    /// Tail exp(R(m) - R(x)), R(x) = c x / log^beta x, on [m, inf).
    LightSubexp {
        beta: f64,
        c: f64,
        x_min: f64,
    },
    /// Explicit atoms (value, mass), sorted by value.
    Lattice {
        atoms: Vec<(f64, f64)>,
    },
}

impl Family {
    fn support(&self) -> (f64, f64) {
        match self {
            Family::Pareto { x_min, .. } => (*x_min, f64::INFINITY),
            Family::TwoSidedStable { w_left, x_min, .. } => {
                let lo = if *w_left > 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -*x_min
                };
                (lo, f64::INFINITY)
            }
            Family::LognormalHazard { .. } => (1.0, f64::INFINITY),
            Family::WeibullHazard { .. } => (0.0, f64::INFINITY),
            Family::LightSubexp { x_min, .. } => (*x_min, f64::INFINITY),
            Family::Lattice { atoms } => (atoms[0].0, atoms[atoms.len() - 1].0),
        }
    }

    /// P{xi > u} in base coordinates.
    fn tail(&self, u: f64) -> f64 {
        match self {
            Family::Pareto { alpha, x_min } => {
                if u <= *x_min {
                    1.0
                } else {
                    (u / x_min).powf(-alpha)
                }
            }
            Family::TwoSidedStable {
                alpha_left,
                beta_right,
                w_left,
                w_right,
                x_min,
            } => {
                let c = *x_min;
                let wb = 1.0 - w_left - w_right;
                if u >= c {
                    if u == c {
                        *w_right
                    } else {
                        w_right * (u / c).powf(-beta_right)
                    }
                } else if u >= -c {
                    w_right + wb * (c - u) / (2.0 * c)
                } else {
                    1.0 - w_left * (-u / c).powf(-alpha_left)
                }
            }
            Family::LognormalHazard { beta, c, rho } => {
                if u <= 1.0 {
                    1.0
                } else {
                    u.powf(*rho) * (-c * u.ln().powf(*beta)).exp()
                }
            }
            Family::WeibullHazard { beta, c } => {
                if u <= 0.0 {
                    1.0
                } else {
                    (-c * u.powf(*beta)).exp()
                }
            }
            Family::LightSubexp { beta, c, x_min } => {
                if u <= *x_min {
                    1.0
                } else {
                    let r = |y: f64| c * y / y.ln().powf(*beta);
                    (r(*x_min) - r(u)).exp()
                }
            }
            Family::Lattice { atoms } => atoms
                .iter()
                .filter(|(v, _)| *v > u)
                .map(|(_, m)| m)
                .sum(),
        }
    }

    /// Density in base coordinates (zero for lattice families).
    fn density(&self, u: f64) -> f64 {
        match self {
            Family::Pareto { alpha, x_min } => {
                if u < *x_min {
                    0.0
                } else {
                    alpha / x_min * (u / x_min).powf(-alpha - 1.0)
                }
            }
            Family::TwoSidedStable {
                alpha_left,
                beta_right,
                w_left,
                w_right,
                x_min,
            } => {
                let c = *x_min;
                if u >= c {
                    w_right * beta_right / c * (u / c).powf(-beta_right - 1.0)
                } else if u > -c {
                    (1.0 - w_left - w_right) / (2.0 * c)
                } else {
                    w_left * alpha_left / c * (-u / c).powf(-alpha_left - 1.0)
                }
            }
            Family::LognormalHazard { beta, c, rho } => {
                if u <= 1.0 {
                    0.0
                } else {
                    self.tail(u) * (c * beta * u.ln().powf(beta - 1.0) - rho) / u
                }
            }
            Family::WeibullHazard { beta, c } => {
                if u <= 0.0 {
                    0.0
                } else {
                    c * beta * u.powf(beta - 1.0) * (-c * u.powf(*beta)).exp()
                }
            }
            Family::LightSubexp { beta, c, x_min } => {
                if u <= *x_min {
                    0.0
                } else {
                    let l = u.ln();
                    let rp = c / l.powf(*beta) * (1.0 - beta / l);
                    self.tail(u) * rp
                }
            }
            Family::Lattice { .. } => 0.0,
        }
    }

    fn atom(&self, u: f64) -> f64 {
        match self {
            Family::Lattice { atoms } => atoms
                .iter()
                .find(|(v, _)| *v == u)
                .map(|(_, m)| *m)
                .unwrap_or(0.0),
            _ => 0.0,
        }
    }

    /// Integral of u^k dF over the closed interval [a, b].
    fn moment_piece(&self, k: u32, a: f64, b: f64) -> Result<f64> {
        if b < a {
            return Ok(0.0);
        }
        match self {
            Family::Pareto { alpha, x_min } => {
                Ok(pareto_piece(*alpha, *x_min, k, a.max(*x_min), b))
            }
            Family::TwoSidedStable {
                alpha_left,
                beta_right,
                w_left,
                w_right,
                x_min,
            } => {
                let c = *x_min;
                let wb = 1.0 - w_left - w_right;
                let mut total = 0.0;
                // right tail piece
                if b > c {
                    total += w_right * pareto_piece(*beta_right, c, k, a.max(c), b);
                }
                // bridge piece
                let (ba, bb) = (a.max(-c), b.min(c));
                if bb > ba && wb > 0.0 {
                    let kk = k as i32 + 1;
                    total += wb / (2.0 * c) * (bb.powi(kk) - ba.powi(kk)) / kk as f64;
                }
                // left tail piece (mirror)
                if a < -c {
                    let hi = (-a).max(c);
                    let lo = (-b.min(-c)).max(c);
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    total += sign * w_left * pareto_piece(*alpha_left, c, k, lo, hi);
                }
                Ok(total)
            }
            Family::Lattice { atoms } => Ok(atoms
                .iter()
                .filter(|(v, _)| *v >= a && *v <= b)
                .map(|(v, m)| v.powi(k as i32) * m)
                .sum()),
            _ => {
                // integration by parts against the analytic tail:
                // int_a^b u^k dF = a^k T(a) - b^k T(b) + k int_a^b u^{k-1} T(u) du
                let (smin, _) = self.support();
                let a = a.max(smin);
                if b <= a {
                    return Ok(0.0);
                }
                let boundary = a.powi(k as i32) * self.tail(a)
                    - if b.is_finite() {
                        b.powi(k as i32) * self.tail(b)
                    } else {
                        0.0
                    };
                if k == 0 {
                    return Ok(boundary);
                }
                let integrand = |u: f64| (k as f64) * u.powi(k as i32 - 1) * self.tail(u);
                let int = if b.is_finite() {
                    integrate(integrand, a, b, QUAD_TOL)?
                } else {
                    integrate_to_inf(integrand, a, QUAD_TOL)?
                };
                Ok(boundary + int)
            }
        }
    }

    /// Base value with tail(u) = t, for t in (0, 1).
    fn from_tail(&self, t: f64) -> f64 {
        match self {
            Family::Pareto { alpha, x_min } => x_min * t.powf(-1.0 / alpha),
            Family::TwoSidedStable {
                alpha_left,
                beta_right,
                w_left,
                w_right,
                x_min,
            } => {
                let c = *x_min;
                let wb = 1.0 - w_left - w_right;
                if t < *w_right {
                    c * (t / w_right).powf(-1.0 / beta_right)
                } else if t <= w_right + wb {
                    c - 2.0 * c * (t - w_right) / wb
                } else {
                    -c * ((1.0 - t) / w_left).powf(-1.0 / alpha_left)
                }
            }
            Family::WeibullHazard { beta, c } => ((-t.ln()) / c).powf(1.0 / beta),
            Family::LognormalHazard { .. } | Family::LightSubexp { .. } => {
                let (smin, _) = self.support();
                // tail is strictly decreasing; expand then bisect
                let mut hi = smin.max(1.0) * 2.0;
                while self.tail(hi) > t {
                    hi *= 2.0;
                }
                numeric::bisect(|u| self.tail(u) - t, smin, hi, 1e-14).unwrap_or(smin)
            }
            Family::Lattice { atoms } => {
                // walk the tail from the right
                let mut acc = 0.0;
                for (v, m) in atoms.iter().rev() {
                    acc += m;
                    if acc >= t {
                        return *v;
                    }
                }
                atoms[0].0
            }
        }
    }

    fn canonical(&self) -> String {
        match self {
            Family::Pareto { alpha, x_min } => format!("pareto;alpha={alpha:.17e};x_min={x_min:.17e}"),
            Family::TwoSidedStable {
                alpha_left,
                beta_right,
                w_left,
                w_right,
                x_min,
            } => format!(
                "two_sided_stable;al={alpha_left:.17e};br={beta_right:.17e};wl={w_left:.17e};wr={w_right:.17e};x_min={x_min:.17e}"
            ),
            Family::LognormalHazard { beta, c, rho } => {
                format!("lognormal_hazard;beta={beta:.17e};c={c:.17e};rho={rho:.17e}")
            }
            Family::WeibullHazard { beta, c } => format!("weibull_hazard;beta={beta:.17e};c={c:.17e}"),
            Family::LightSubexp { beta, c, x_min } => {
                format!("light_subexp;beta={beta:.17e};c={c:.17e};x_min={x_min:.17e}")
            }
            Family::Lattice { atoms } => {
                let mut s = String::from("lattice");
                for (v, m) in atoms {
                    s.push_str(&format!(";{v:.17e}:{m:.17e}"));
                }
                s
            }
        }
    }
}

fn pareto_piece(alpha: f64, x_min: f64, k: u32, a: f64, b: f64) -> f64 {
    let a = a.max(x_min);
    if b <= a {
        return 0.0;
    }
    let kf = k as f64;
    let scale = alpha * x_min.powf(alpha);
    let upper = |u: f64| -> f64 {
        if u.is_finite() {
            u.powf(kf - alpha)
        } else {
            0.0 // only valid for k < alpha; callers guard via f64 overflow below
        }
    };
    if (kf - alpha).abs() < 1e-12 {
        if !b.is_finite() {
            return f64::INFINITY;
        }
        scale * (b / a).ln()
    } else {
        if !b.is_finite() && kf > alpha {
            return f64::INFINITY;
        }
        scale * (upper(b) - upper(a)) / (kf - alpha)
    }
}

/// A step-size distribution: a family plus an exact affine pass-through.
///
/// The represented variable is `xi = (U - shift) / scale` where `U` follows
/// the base family, so tails map as `tail(x) = base_tail(shift + scale x)`.
#[derive(Clone, Debug)]
pub struct StepDistribution {
    family: Family,
    shift: f64,
    scale: f64,
}

impl StepDistribution {
    pub fn new(family: Family) -> Result<Self> {
        validate(&family)?;
        Ok(StepDistribution {
            family,
            shift: 0.0,
            scale: 1.0,
        })
    }

    pub fn pareto(alpha: f64, x_min: f64) -> Result<Self> {
        Self::new(Family::Pareto { alpha, x_min })
    }

    pub fn two_sided(
        alpha_left: f64,
        beta_right: f64,
        w_left: f64,
        w_right: f64,
        x_min: f64,
    ) -> Result<Self> {
        Self::new(Family::TwoSidedStable {
            alpha_left,
            beta_right,
            w_left,
            w_right,
            x_min,
        })
    }

    pub fn lognormal_hazard(beta: f64, c: f64, rho: f64) -> Result<Self> {
        Self::new(Family::LognormalHazard { beta, c, rho })
    }

    pub fn weibull_hazard(beta: f64, c: f64) -> Result<Self> {
        Self::new(Family::WeibullHazard { beta, c })
    }

    pub fn light_subexp(beta: f64, c: f64) -> Result<Self> {
        let x_min = (std::f64::consts::E * std::f64::consts::E).max(1.25 * beta.exp());
        Self::new(Family::LightSubexp { beta, c, x_min })
    }

    pub fn lattice(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let mut atoms = atoms;
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Self::new(Family::Lattice { atoms })
    }

    /// Fair coin on {0, 1}.
    pub fn coin() -> Self {
        Self::lattice(vec![(0.0, 0.5), (1.0, 0.5)]).unwrap()
    }

    /// +-1 with probability 1/2 each.
    pub fn rademacher() -> Self {
        Self::lattice(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap()
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.family, Family::Lattice { .. })
    }

    fn to_base(&self, x: f64) -> f64 {
        self.shift + self.scale * x
    }

    fn from_base(&self, u: f64) -> f64 {
        (u - self.shift) / self.scale
    }

    /// Support interval in user coordinates.
    pub fn support(&self) -> (f64, f64) {
        let (a, b) = self.family.support();
        (self.from_base(a), self.from_base(b))
    }

    /// P{xi > x}.
    pub fn tail(&self, x: f64) -> f64 {
        self.family.tail(self.to_base(x))
    }

    /// P{x < xi <= x + T}; `T = f64::INFINITY` gives the plain tail.
    pub fn window_mass(&self, x: f64, t: f64) -> f64 {
        if t.is_infinite() {
            self.tail(x)
        } else {
            (self.tail(x) - self.tail(x + t)).max(0.0)
        }
    }

    /// P{|xi| > x}.
    pub fn two_sided_tail(&self, x: f64) -> f64 {
        (1.0 - self.moment_interval(0, -x, x)).max(0.0)
    }

    /// Point mass at x (nonzero only for lattice families).
    pub fn atom(&self, x: f64) -> f64 {
        self.family.atom(self.to_base(x))
    }

    pub fn density(&self, x: f64) -> f64 {
        self.scale * self.family.density(self.to_base(x))
    }

    /// Integral of x^k dF over the closed interval [a, b] in user coords.
    fn moment_interval(&self, k: u32, a: f64, b: f64) -> f64 {
        let (ua, ub) = (self.to_base(a), self.to_base(b));
        let p = |j: u32| self.family.moment_piece(j, ua, ub).unwrap_or(f64::NAN);
        let s = self.shift;
        let c = self.scale;
        match k {
            0 => p(0),
            1 => (p(1) - s * p(0)) / c,
            2 => (p(2) - 2.0 * s * p(1) + s * s * p(0)) / (c * c),
            _ => unreachable!(),
        }
    }

    /// Truncated moments (mu1, mu2) over {|xi| <= x}.
    pub fn truncated_moments(&self, x: f64) -> (f64, f64) {
        (
            self.moment_interval(1, -x, x),
            self.moment_interval(2, -x, x),
        )
    }

    /// Q(x) = x^-2 mu2(x) + P{|xi| > x}.
    pub fn q_function(&self, x: f64) -> f64 {
        let (_, mu2) = self.truncated_moments(x);
        mu2 / (x * x) + self.two_sided_tail(x)
    }

    /// Mean, or None when the first moment diverges.
    pub fn mean(&self) -> Option<f64> {
        let m = match &self.family {
            Family::Pareto { alpha, x_min } => {
                if *alpha <= 1.0 {
                    return None;
                }
                alpha * x_min / (alpha - 1.0)
            }
            Family::TwoSidedStable {
                alpha_left,
                beta_right,
                w_left,
                w_right,
                x_min,
            } => {
                if *alpha_left <= 1.0 && *w_left > 0.0 {
                    return None;
                }
                if *beta_right <= 1.0 && *w_right > 0.0 {
                    return None;
                }
                let part = |idx: f64| idx * x_min / (idx - 1.0);
                w_right * part(*beta_right) - w_left * part(*alpha_left)
            }
            Family::Lattice { atoms } => atoms.iter().map(|(v, m)| v * m).sum(),
            _ => {
                let (smin, _) = self.family.support();
                smin + integrate_to_inf(|u| self.family.tail(u), smin, QUAD_TOL).ok()?
            }
        };
        Some(self.from_base(m))
    }

    /// Variance, or None when the second moment diverges.
    pub fn variance(&self) -> Option<f64> {
        let (m1, m2) = match &self.family {
            Family::Pareto { alpha, x_min } => {
                if *alpha <= 2.0 {
                    return None;
                }
                (
                    alpha * x_min / (alpha - 1.0),
                    alpha * x_min * x_min / (alpha - 2.0),
                )
            }
            Family::TwoSidedStable {
                alpha_left,
                beta_right,
                w_left,
                w_right,
                x_min,
            } => {
                if (*alpha_left <= 2.0 && *w_left > 0.0) || (*beta_right <= 2.0 && *w_right > 0.0)
                {
                    return None;
                }
                let p1 = |idx: f64| idx * x_min / (idx - 1.0);
                let p2 = |idx: f64| idx * x_min * x_min / (idx - 2.0);
                let wb = 1.0 - w_left - w_right;
                (
                    w_right * p1(*beta_right) - w_left * p1(*alpha_left),
                    w_right * p2(*beta_right)
                        + w_left * p2(*alpha_left)
                        + wb * x_min * x_min / 3.0,
                )
            }
            Family::Lattice { atoms } => {
                let m1: f64 = atoms.iter().map(|(v, m)| v * m).sum();
                let m2: f64 = atoms.iter().map(|(v, m)| v * v * m).sum();
                (m1, m2)
            }
            _ => {
                let (smin, _) = self.family.support();
                let m1 = smin + integrate_to_inf(|u| self.family.tail(u), smin, QUAD_TOL).ok()?;
                let m2 = smin * smin
                    + 2.0 * integrate_to_inf(|u| u * self.family.tail(u), smin, QUAD_TOL).ok()?;
                (m1, m2)
            }
        };
        Some((m2 - m1 * m1) / (self.scale * self.scale))
    }

    /// Affine rescaling with exact tail pass-through.
    pub fn standardize(&self, mode: StandardizeMode) -> Result<Self> {
        match mode {
            StandardizeMode::None => Ok(self.clone()),
            StandardizeMode::CenterOnly => {
                let m = self
                    .mean()
                    .ok_or_else(|| Error::RegimeMismatch("mean does not exist".into()))?;
                let out = StepDistribution {
                    family: self.family.clone(),
                    shift: self.shift + m * self.scale,
                    scale: self.scale,
                };
                out.verify_standardized(false)?;
                Ok(out)
            }
            StandardizeMode::Full => {
                let m = self
                    .mean()
                    .ok_or_else(|| Error::RegimeMismatch("mean does not exist".into()))?;
                let v = self.variance().ok_or(Error::InfiniteVariance)?;
                let out = StepDistribution {
                    family: self.family.clone(),
                    shift: self.shift + m * self.scale,
                    scale: self.scale * v.sqrt(),
                };
                out.verify_standardized(true)?;
                Ok(out)
            }
        }
    }

    /// Quadrature check of the standardized moments, independent of the
    /// closed forms used to build the wrapper.
    fn verify_standardized(&self, unit_variance: bool) -> Result<()> {
        let (b1, b2) = match &self.family {
            Family::Lattice { atoms } => {
                let m1: f64 = atoms.iter().map(|(v, m)| v * m).sum();
                let m2: f64 = atoms.iter().map(|(v, m)| v * v * m).sum();
                (m1, if unit_variance { Some(m2) } else { None })
            }
            _ => {
                // split signed moments at zero so each part integrates a
                // positive function to relative tolerance
                let (smin, _) = self.family.support();
                let f = |u: f64| self.family.density(u);
                let pos = integrate_to_inf(|u| u * f(u), smin.max(0.0), 1e-12)?;
                let neg = if smin < 0.0 {
                    crate::numeric::integrate_from_neg_inf(|u| -u * f(u), 0.0, 1e-12)?
                } else if smin.is_finite() {
                    0.0
                } else {
                    0.0
                };
                let b1 = pos - neg;
                let b2 = if unit_variance {
                    let p2 = integrate_to_inf(|u| u * u * f(u), smin.max(0.0), 1e-12)?;
                    let n2 = if smin < 0.0 {
                        crate::numeric::integrate_from_neg_inf(|u| u * u * f(u), 0.0, 1e-12)?
                    } else {
                        0.0
                    };
                    Some(p2 + n2)
                } else {
                    None
                };
                (b1, b2)
            }
        };
        let mean = self.from_base(b1);
        if mean.abs() > 1e-9 {
            return Err(Error::RegimeMismatch(format!(
                "standardized mean {mean:.3e} exceeds 1e-9"
            )));
        }
        if let Some(b2) = b2 {
            let ey2 = (b2 - 2.0 * self.shift * b1 + self.shift * self.shift)
                / (self.scale * self.scale);
            if (ey2 - mean * mean - 1.0).abs() > 1e-9 {
                return Err(Error::RegimeMismatch(format!(
                    "standardized variance {:.12} not within 1e-9 of 1",
                    ey2 - mean * mean
                )));
            }
        }
        Ok(())
    }

    /// Value x with tail(x) = t, t in (0, 1).
    pub fn quantile_from_tail(&self, t: f64) -> f64 {
        self.from_base(self.family.from_tail(t))
    }

    /// Smallest x with P{xi < -x} < p (left-tail quantile scale).
    pub fn left_tail_quantile(&self, p: f64) -> Result<f64> {
        match &self.family {
            Family::TwoSidedStable {
                alpha_left,
                w_left,
                x_min,
                ..
            } => {
                if *w_left <= 0.0 {
                    return Err(Error::RegimeMismatch("no left tail".into()));
                }
                // P{xi < -x} = w_left (x / x_min)^-alpha  (base coords)
                let base = x_min * (w_left / p).powf(1.0 / alpha_left);
                Ok(-self.from_base(-base))
            }
            _ => Err(Error::RegimeMismatch(
                "left-tail quantile requires a two-sided family".into(),
            )),
        }
    }

    /// Deterministic inverse-CDF sampling: one value per (stream, counter).
    pub fn sample_at(&self, rng: &CounterRng, stream: u64, counter: u64) -> f64 {
        self.quantile_from_tail(rng.uniform(stream, counter))
    }

    /// `count` draws on stream 0; identical seed gives identical output.
    pub fn sample(&self, seed: u64, count: usize) -> Vec<f64> {
        let rng = CounterRng::new(seed);
        (0..count).map(|i| self.sample_at(&rng, 0, i as u64)).collect()
    }

    /// Declared Matuszewska indices of x -> F(x + Delta), when the family
    /// is O-regularly varying; None for super-polynomial or bounded tails.
    pub fn declared_indices(&self, t_window: f64) -> Option<(f64, f64)> {
        let base = match &self.family {
            Family::Pareto { alpha, .. } => Some(-alpha),
            Family::TwoSidedStable {
                beta_right, w_right, ..
            } => {
                if *w_right > 0.0 {
                    Some(-beta_right)
                } else {
                    None
                }
            }
            _ => None,
        }?;
        let idx = if t_window.is_finite() { base - 1.0 } else { base };
        Some((idx, idx))
    }

    /// Stable 64-bit key of the family and affine parameters.
    pub fn stable_hash(&self) -> u64 {
        let desc = format!(
            "{};shift={:.17e};scale={:.17e}",
            self.family.canonical(),
            self.shift,
            self.scale
        );
        numeric::fnv1a(desc.as_bytes())
    }

    /// Exponential tilt at level h, truncated above h.
    pub fn tilt_truncate(&self, h: f64) -> Result<TiltedTruncated> {
        TiltedTruncated::new(self.clone(), h)
    }
}

fn validate(family: &Family) -> Result<()> {
    let bad = |param: &'static str, family: &'static str, reason: String| {
        Err(Error::ParamOutOfRange {
            family,
            param,
            reason,
        })
    };
    match family {
        Family::Pareto { alpha, x_min } => {
            if !(*alpha > 0.0) {
                return bad("alpha", "pareto", format!("alpha = {alpha}, need > 0"));
            }
            if !(*x_min > 0.0) {
                return bad("x_min", "pareto", format!("x_min = {x_min}, need > 0"));
            }
        }
        Family::TwoSidedStable {
            alpha_left,
            beta_right,
            w_left,
            w_right,
            x_min,
        } => {
            if !(*alpha_left > 0.0) {
                return bad("alpha_left", "two_sided_stable", "need > 0".into());
            }
            if *alpha_left > *beta_right {
                return bad(
                    "alpha_left",
                    "two_sided_stable",
                    format!("left index {alpha_left} exceeds right index {beta_right}"),
                );
            }
            if !(*x_min > 0.0) {
                return bad("x_min", "two_sided_stable", "need > 0".into());
            }
            if *w_left < 0.0 || *w_right < 0.0 || w_left + w_right > 1.0 + 1e-12 {
                return bad(
                    "w_left",
                    "two_sided_stable",
                    format!("weights ({w_left}, {w_right}) must be nonnegative, sum <= 1"),
                );
            }
        }
        Family::LognormalHazard { beta, c, rho } => {
            if !(*beta > 1.0) {
                return bad("beta", "lognormal_hazard", format!("beta = {beta}, need > 1"));
            }
            if !(*c > 0.0) {
                return bad("c", "lognormal_hazard", "need > 0".into());
            }
            if *rho > 0.0 {
                return bad("rho", "lognormal_hazard", "need <= 0 for a monotone tail".into());
            }
        }
        Family::WeibullHazard { beta, c } => {
            if !(*beta > 0.0 && *beta < 1.0) {
                return bad("beta", "weibull_hazard", format!("beta = {beta}, need in (0,1)"));
            }
            if !(*c > 0.0) {
                return bad("c", "weibull_hazard", "need > 0".into());
            }
        }
        Family::LightSubexp { beta, c, x_min } => {
            if !(*beta > 0.0) {
                return bad("beta", "light_subexp", "need > 0".into());
            }
            if !(*c > 0.0) {
                return bad("c", "light_subexp", "need > 0".into());
            }
            if x_min.ln() <= *beta {
                return bad("x_min", "light_subexp", "need log(x_min) > beta".into());
            }
        }
        Family::Lattice { atoms } => {
            if atoms.is_empty() {
                return bad("atoms", "lattice", "need at least one atom".into());
            }
            if atoms.iter().any(|(_, m)| *m < 0.0) {
                return bad("atoms", "lattice", "masses must be nonnegative".into());
            }
            let total: f64 = atoms.iter().map(|(_, m)| m).sum();
            if (total - 1.0).abs() > 1e-9 {
                return bad("atoms", "lattice", format!("masses sum to {total}, need 1"));
            }
            for w in atoms.windows(2) {
                if w[0].0 >= w[1].0 {
                    return bad("atoms", "lattice", "values must be strictly increasing".into());
                }
            }
        }
    }
    Ok(())
}

/// Builds a family from a name and a key-value parameter map.
pub fn make_family(name: &str, params: &BTreeMap<String, f64>) -> Result<StepDistribution> {
    let get = |key: &str, default: Option<f64>| -> Result<f64> {
        params.get(key).copied().or(default).ok_or_else(|| Error::Config {
            field: format!("family.{key}"),
            msg: "missing required parameter".into(),
        })
    };
    let known: &[&str] = match name {
        "pareto" => &["alpha", "x_min"],
        "two_sided_stable" => &["alpha_left", "beta_right", "w_left", "w_right", "x_min"],
        "lognormal_hazard" => &["beta", "c", "rho"],
        "weibull_hazard" => &["beta", "c"],
        "light_subexp" => &["beta", "c", "x_min"],
        _ => return Err(Error::UnknownFamily(name.to_string())),
    };
    for key in params.keys() {
        if !known.contains(&key.as_str()) {
            return Err(Error::Config {
                field: format!("family.{key}"),
                msg: format!("unknown parameter for family `{name}`"),
            });
        }
    }
    match name {
        "pareto" => StepDistribution::pareto(get("alpha", None)?, get("x_min", Some(1.0))?),
        "two_sided_stable" => StepDistribution::two_sided(
            get("alpha_left", None)?,
            get("beta_right", None)?,
            get("w_left", Some(0.5))?,
            get("w_right", Some(0.5))?,
            get("x_min", Some(1.0))?,
        ),
        "lognormal_hazard" => StepDistribution::lognormal_hazard(
            get("beta", None)?,
            get("c", None)?,
            get("rho", Some(0.0))?,
        ),
        "weibull_hazard" => StepDistribution::weibull_hazard(get("beta", None)?, get("c", None)?),
        "light_subexp" => {
            let beta = get("beta", None)?;
            let default_min = (std::f64::consts::E * std::f64::consts::E).max(1.25 * beta.exp());
            StepDistribution::new(Family::LightSubexp {
                beta,
                c: get("c", None)?,
                x_min: get("x_min", Some(default_min))?,
            })
        }
        _ => unreachable!(),
    }
}

enum TiltSampler {
    Atoms { values: Vec<f64>, cdf: Vec<f64> },
    Table { ys: Vec<f64>, cdf: Vec<f64> },
}

/// Exponentially tilted, truncated law: density e^{y/h} dF(y) / phi on
/// {y <= h}, with phi the truncated exponential moment.
pub struct TiltedTruncated {
    base: StepDistribution,
    h: f64,
    log_phi: f64,
    sampler: TiltSampler,
}

impl TiltedTruncated {
    fn new(base: StepDistribution, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::ParamOutOfRange {
                family: "tilt",
                param: "h",
                reason: format!("h = {h}, need > 0"),
            });
        }
        let (smin, smax) = base.support();
        if smin > h {
            return Err(Error::EmptyTilt(h));
        }
        let top = smax.min(h);
        let (phi, sampler) = if base.is_discrete() {
            let mut values = Vec::new();
            let mut weights = Vec::new();
            if let Family::Lattice { atoms } = base.family() {
                for (v, m) in atoms {
                    let y = base.from_base(*v);
                    if y <= h {
                        values.push(y);
                        weights.push(m * (y / h).exp());
                    }
                }
            }
            let phi: f64 = weights.iter().sum();
            if phi <= 0.0 {
                return Err(Error::EmptyTilt(h));
            }
            let mut cdf = Vec::with_capacity(weights.len());
            let mut acc = 0.0;
            for w in &weights {
                acc += w / phi;
                cdf.push(acc);
            }
            *cdf.last_mut().unwrap() = 1.0;
            (phi, TiltSampler::Atoms { values, cdf })
        } else {
            let tilted_density = |y: f64| (y / h).exp() * base.density(y);
            let phi = integrate(&tilted_density, smin, top, 1e-12)?;
            if phi <= 0.0 {
                return Err(Error::EmptyTilt(h));
            }
            // inversion table at conditional-quantile nodes of the base law
            let n = 4096usize;
            let below = 1.0 - base.tail(top);
            let mut ys = Vec::with_capacity(n + 1);
            ys.push(smin);
            for j in 1..n {
                let p = below * (j as f64) / (n as f64);
                ys.push(base.quantile_from_tail(1.0 - p).min(top));
            }
            ys.push(top);
            ys.dedup_by(|a, b| *a <= *b + 0.0);
            let mut cdf = Vec::with_capacity(ys.len());
            cdf.push(0.0);
            let mut acc = 0.0;
            for w in ys.windows(2) {
                acc += integrate(&tilted_density, w[0], w[1], 1e-10)? / phi;
                cdf.push(acc);
            }
            let total = *cdf.last().unwrap();
            for c in cdf.iter_mut() {
                *c /= total;
            }
            (phi, TiltSampler::Table { ys, cdf })
        };
        Ok(TiltedTruncated {
            base,
            h,
            log_phi: phi.ln(),
            sampler,
        })
    }

    pub fn phi(&self) -> f64 {
        self.log_phi.exp()
    }

    pub fn log_phi(&self) -> f64 {
        self.log_phi
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn base(&self) -> &StepDistribution {
        &self.base
    }

    /// Total tilted mass, recomputed independently of the normalizer.
    pub fn total_mass(&self) -> f64 {
        match &self.sampler {
            TiltSampler::Atoms { values, .. } => {
                let phi = self.phi();
                values
                    .iter()
                    .map(|y| self.base.atom(*y) * (*y / self.h).exp() / phi)
                    .sum()
            }
            TiltSampler::Table { ys, .. } => {
                let phi = self.phi();
                let top = *ys.last().unwrap();
                integrate(
                    |y| (y / self.h).exp() * self.base.density(y) / phi,
                    ys[0],
                    top,
                    1e-11,
                )
                .unwrap_or(f64::NAN)
            }
        }
    }

    /// P{tilted variable > y}.
    pub fn tail(&self, y: f64) -> f64 {
        match &self.sampler {
            TiltSampler::Atoms { values, .. } => {
                let phi = self.phi();
                values
                    .iter()
                    .filter(|v| **v > y)
                    .map(|v| self.base.atom(*v) * (*v / self.h).exp() / phi)
                    .sum()
            }
            TiltSampler::Table { ys, .. } => {
                let top = *ys.last().unwrap();
                if y >= top {
                    return 0.0;
                }
                let lo = y.max(ys[0]);
                integrate(
                    |u| (u / self.h).exp() * self.base.density(u),
                    lo,
                    top,
                    1e-10,
                )
                .map(|v| v / self.phi())
                .unwrap_or(f64::NAN)
            }
        }
    }

    /// Probability mass of the tilted law at an atom.
    pub fn atom(&self, y: f64) -> f64 {
        self.base.atom(y) * (y / self.h).exp() / self.phi()
    }

    pub fn sample_at(&self, rng: &CounterRng, stream: u64, counter: u64) -> f64 {
        let u = rng.uniform(stream, counter);
        match &self.sampler {
            TiltSampler::Atoms { values, cdf } => {
                let idx = cdf.partition_point(|c| *c < u);
                values[idx.min(values.len() - 1)]
            }
            TiltSampler::Table { ys, cdf } => {
                let idx = cdf.partition_point(|c| *c < u).max(1);
                let (c0, c1) = (cdf[idx - 1], cdf[idx]);
                let (y0, y1) = (ys[idx - 1], ys[idx]);
                if c1 > c0 {
                    y0 + (y1 - y0) * (u - c0) / (c1 - c0)
                } else {
                    y0
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pareto25() -> StepDistribution {
        StepDistribution::pareto(2.5, 1.0).unwrap()
    }

    #[test]
    fn pareto_tail_closed_form() {
        let d = pareto25();
        assert!((d.tail(2.0) - 2.0f64.powf(-2.5)).abs() < 1e-12);
        assert!((d.tail(2.0) - 0.1767767).abs() < 1e-7);
        assert_eq!(d.tail(0.5), 1.0);
    }

    #[test]
    fn two_sided_tail_closed_form() {
        let d = StepDistribution::two_sided(1.5, 3.0, 0.5, 0.5, 1.0).unwrap();
        let g = d.two_sided_tail(10.0);
        let expect = 0.5 * 10f64.powf(-1.5) + 0.5 * 1e-3;
        assert!((g - expect).abs() < 1e-12);
        assert!((g - 0.0163114).abs() < 1e-7);
    }

    #[test]
    fn weibull_tail() {
        let d = StepDistribution::weibull_hazard(0.5, 1.0).unwrap();
        assert!((d.tail(4.0) - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn window_mass_values() {
        let d = pareto25();
        let w = d.window_mass(2.0, 1.0);
        assert!((w - (2.0f64.powf(-2.5) - 3.0f64.powf(-2.5))).abs() < 1e-12);
        assert!((w - 0.1126267).abs() < 1e-7);
        assert_eq!(d.window_mass(2.0, f64::INFINITY), d.tail(2.0));

        let l = StepDistribution::lattice(vec![(1.0, 0.7), (2.0, 0.2), (3.0, 0.1)]).unwrap();
        assert!((l.window_mass(1.5, 1.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn window_consistency_telescopes() {
        let d = pareto25();
        for x in [1.0, 2.0, 5.5, 40.0] {
            for t in [0.25, 1.0, 7.0] {
                let lhs = d.window_mass(x, t) + d.window_mass(x + t, t);
                let rhs = d.window_mass(x, 2.0 * t);
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn truncated_moments_pareto() {
        let d = pareto25();
        let (mu1, mu2) = d.truncated_moments(4.0);
        assert!((mu1 - (5.0 / 3.0) * (1.0 - 4.0f64.powf(-1.5))).abs() < 1e-12);
        assert!((mu1 - 1.4583333).abs() < 1e-7);
        assert!((mu2 - 2.5).abs() < 1e-12);
    }

    #[test]
    fn truncated_moments_symmetric_two_sided() {
        let d = StepDistribution::two_sided(1.5, 1.5, 0.5, 0.5, 1.0).unwrap();
        let (mu1, mu2) = d.truncated_moments(100.0);
        assert!(mu1.abs() < 1e-12);
        assert!((mu2 - 27.0).abs() < 1e-10, "mu2 = {mu2}");
    }

    #[test]
    fn q_function_values() {
        let d = StepDistribution::two_sided(1.5, 1.5, 0.5, 0.5, 1.0).unwrap();
        assert!((d.q_function(100.0) - 0.0037).abs() < 1e-10);

        let r = StepDistribution::rademacher();
        for x in [1.0, 2.0, 10.0] {
            assert!((r.q_function(x) - 1.0 / (x * x)).abs() < 1e-15);
        }
    }

    #[test]
    fn moments_against_quadrature() {
        let d = pareto25();
        // independent quadrature oracle for the truncated moments
        let mu1_quad = integrate(|u| u * d.density(u), 1.0, 4.0, 1e-12).unwrap();
        let mu2_quad = integrate(|u| u * u * d.density(u), 1.0, 4.0, 1e-12).unwrap();
        let (mu1, mu2) = d.truncated_moments(4.0);
        assert!((mu1 - mu1_quad).abs() < 1e-9);
        assert!((mu2 - mu2_quad).abs() < 1e-9);
    }

    #[test]
    fn standardize_pareto() {
        let d = pareto25();
        assert!((d.mean().unwrap() - 5.0 / 3.0).abs() < 1e-12);
        assert!((d.variance().unwrap() - 20.0 / 9.0).abs() < 1e-12);
        let s = d.standardize(StandardizeMode::Full).unwrap();
        assert!((s.shift() - 5.0 / 3.0).abs() < 1e-12);
        assert!((s.scale() - (20.0f64 / 9.0).sqrt()).abs() < 1e-12);
        // exact tail pass-through
        let x = 3.0;
        assert_eq!(s.tail(x), d.tail(s.shift() + s.scale() * x));
    }

    #[test]
    fn standardize_rademacher_identity() {
        let r = StepDistribution::rademacher();
        let s = r.standardize(StandardizeMode::Full).unwrap();
        assert_eq!(s.shift(), 0.0);
        assert_eq!(s.scale(), 1.0);
    }

    #[test]
    fn standardize_infinite_variance_fails() {
        let d = StepDistribution::two_sided(1.5, 1.5, 0.5, 0.5, 1.0).unwrap();
        assert!(matches!(
            d.standardize(StandardizeMode::Full),
            Err(Error::InfiniteVariance)
        ));
    }

    #[test]
    fn sampling_deterministic_and_consistent() {
        let d = pareto25();
        let a = d.sample(99, 1000);
        let b = d.sample(99, 1000);
        assert_eq!(a, b);

        let n = 1_000_000usize;
        let xs = d.sample(7, n);
        let mean: f64 = xs.iter().sum::<f64>() / n as f64;
        let se = (d.variance().unwrap() / n as f64).sqrt();
        assert!((mean - 5.0 / 3.0).abs() < 3.0 * se, "mean {mean}");

        let tail_hits = xs.iter().filter(|x| **x > 10.0).count() as f64 / n as f64;
        let p = 10f64.powf(-2.5);
        let se_tail = (p * (1.0 - p) / n as f64).sqrt();
        assert!((tail_hits - p).abs() < 3.0 * se_tail, "tail {tail_hits}");
    }

    #[test]
    fn infinite_mean_left_quantile() {
        let d = StepDistribution::two_sided(0.5, 1.0, 1.0, 0.0, 1.0).unwrap();
        let b = d.left_tail_quantile(1.0 / 100.0).unwrap();
        assert!((b - 1e4).abs() < 1e-6);
    }

    #[test]
    fn tilt_rademacher() {
        let r = StepDistribution::rademacher();
        let t = r.tilt_truncate(2.0).unwrap();
        assert!((t.phi() - 0.5f64.cosh()).abs() < 1e-12);
        assert!((t.atom(1.0) - 0.5f64.exp() / (2.0 * 0.5f64.cosh())).abs() < 1e-12);
        assert!((t.atom(1.0) - 0.7310586).abs() < 1e-7);

        let big = r.tilt_truncate(1e6).unwrap();
        assert!((big.atom(1.0) - 0.5).abs() < 1e-6);
        assert!((big.atom(-1.0) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn tilt_two_point() {
        let d = StepDistribution::coin();
        let t = d.tilt_truncate(1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((t.phi() - (1.0 + e) / 2.0).abs() < 1e-12);
        assert!((t.atom(1.0) - e / (1.0 + e)).abs() < 1e-12);
    }

    #[test]
    fn tilt_normalization_and_dominance() {
        let d = pareto25();
        let t = d.tilt_truncate(5.0).unwrap();
        assert!((t.total_mass() - 1.0).abs() < 1e-10);
        // tilted law dominates the conditional law
        let cond = |y: f64| (d.tail(y) - d.tail(5.0)) / (1.0 - d.tail(5.0));
        for y in [1.5, 2.0, 3.0, 4.0] {
            assert!(t.tail(y) + 1e-9 >= cond(y), "y = {y}");
        }
        // no mass above h
        assert_eq!(t.tail(5.0), 0.0);
    }

    #[test]
    fn tilt_below_support_fails() {
        let d = pareto25();
        assert!(matches!(d.tilt_truncate(0.5), Err(Error::EmptyTilt(_))));
    }

    #[test]
    fn make_family_errors() {
        let mut p = BTreeMap::new();
        p.insert("alpha".to_string(), 2.5);
        assert!(make_family("pareto", &p).is_ok());
        assert!(matches!(
            make_family("cauchy", &p),
            Err(Error::UnknownFamily(_))
        ));
        p.insert("alpha".to_string(), -1.0);
        assert!(make_family("pareto", &p).is_err());

        let mut q = BTreeMap::new();
        q.insert("alpha_left".to_string(), 3.0);
        q.insert("beta_right".to_string(), 1.5);
        assert!(make_family("two_sided_stable", &q).is_err());
    }

    #[test]
    fn tail_monotone_property() {
        let fams: Vec<StepDistribution> = vec![
            pareto25(),
            StepDistribution::two_sided(1.5, 3.0, 0.4, 0.5, 1.0).unwrap(),
            StepDistribution::lognormal_hazard(2.0, 0.5, 0.0).unwrap(),
            StepDistribution::weibull_hazard(0.5, 1.0).unwrap(),
            StepDistribution::light_subexp(1.0, 1.0).unwrap(),
        ];
        for d in &fams {
            let mut prev = f64::INFINITY;
            let mut x = -4.0;
            while x < 400.0 {
                let t = d.tail(x);
                assert!(t <= prev + 1e-15);
                assert!((0.0..=1.0).contains(&t));
                assert!(d.window_mass(x, 3.0) >= -1e-15);
                prev = t;
                x += 1.37;
            }
        }
    }

    #[test]
    fn mu2_bounded_by_x_squared() {
        let d = StepDistribution::two_sided(1.5, 3.0, 0.4, 0.5, 1.0).unwrap();
        for x in [1.0, 3.0, 10.0, 55.0] {
            let (_, mu2) = d.truncated_moments(x);
            let bound = x * x * (1.0 - d.two_sided_tail(x));
            assert!(mu2 <= bound + 1e-12);
        }
    }
}
