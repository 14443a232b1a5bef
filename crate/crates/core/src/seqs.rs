//! Boundary sequences for the big-jump domain: natural scale, truncation
//! level, insensitivity and small-steps boundaries, the partial-attraction
//! scale a_n, and the per-regime closed forms plus the fixed-point
//! heuristic for the best small-steps sequence.

use serde::{Deserialize, Serialize};

use crate::dist::{Family, StepDistribution};
use crate::error::{Error, Result};
use crate::lattice::{self, GridSpec, RatioVariant};
use crate::numeric;

/// Which closed-form regime produced a boundary set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "prop_8_1")]
    Prop81,
    #[serde(rename = "prop_8_2")]
    Prop82,
    #[serde(rename = "prop_8_3")]
    Prop83,
    #[serde(rename = "prop_8_4")]
    Prop84,
    #[serde(rename = "prop_9_1")]
    Prop91,
    #[serde(rename = "prop_9_2")]
    Prop92,
    #[serde(rename = "prop_9_3")]
    Prop93,
    #[serde(rename = "heuristic_24")]
    Heuristic24,
    #[serde(rename = "corollary_2_1")]
    Corollary21,
}

impl Provenance {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "prop_8_1" => Provenance::Prop81,
            "prop_8_2" => Provenance::Prop82,
            "prop_8_3" => Provenance::Prop83,
            "prop_8_4" => Provenance::Prop84,
            "prop_9_1" => Provenance::Prop91,
            "prop_9_2" => Provenance::Prop92,
            "prop_9_3" => Provenance::Prop93,
            "heuristic_24" => Provenance::Heuristic24,
            "corollary_2_1" => Provenance::Corollary21,
            other => {
                return Err(Error::Config {
                    field: "boundary.provenance".into(),
                    msg: format!("unknown provenance `{other}`"),
                })
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Provenance::Prop81 => "prop_8_1",
            Provenance::Prop82 => "prop_8_2",
            Provenance::Prop83 => "prop_8_3",
            Provenance::Prop84 => "prop_8_4",
            Provenance::Prop91 => "prop_9_1",
            Provenance::Prop92 => "prop_9_2",
            Provenance::Prop93 => "prop_9_3",
            Provenance::Heuristic24 => "heuristic_24",
            Provenance::Corollary21 => "corollary_2_1",
        }
    }
}

/// Tunables; every value is echoed into reports so boundaries reproduce.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundaryOptions {
    /// Slack constant t of the sqrt(t n log n)-type sequences; also scales
    /// t_n = t * n for the balanced infinite-variance regime.
    pub t: f64,
    /// Exponent slack for the hazard-form regimes.
    pub epsilon: f64,
    /// Log-denominator constant of the balanced regime.
    pub gamma: f64,
    /// Insensitivity tolerance defining the insensitivity boundary.
    pub tol_i: f64,
    /// Materializes "much larger than" boundaries when the insensitivity
    /// boundary is unavailable: x_n = multiplier * J_n.
    pub multiplier: f64,
    /// Moment order for the linear-boundary mode.
    pub kappa: f64,
    /// Slope a of the linear boundary x_n = a n.
    pub a_lin: f64,
    /// Window width (infinity for global tails).
    #[serde(with = "window_width")]
    pub t_window: f64,
}

/// JSON cannot hold f64 infinity; the global window round-trips as "inf".
mod window_width {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad window `{t}`"))),
        }
    }
}

impl Default for BoundaryOptions {
    fn default() -> Self {
        BoundaryOptions {
            t: 1.0,
            epsilon: 0.5,
            gamma: 3.0,
            tol_i: 0.05,
            multiplier: 3.0,
            kappa: 2.0,
            a_lin: 1.0,
            t_window: f64::INFINITY,
        }
    }
}

/// The boundary tuple for one walk length.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundarySet {
    pub n: u32,
    pub b_n: f64,
    pub a_n: Option<f64>,
    pub h_n: f64,
    pub i_n: Option<f64>,
    pub j_n: f64,
    pub x_n: f64,
    pub i_n_absent: bool,
    pub provenance: Provenance,
    pub options: BoundaryOptions,
}

impl BoundarySet {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("boundary set serializes")
    }
}

fn is_standardized(d: &StepDistribution) -> bool {
    matches!(
        (d.mean(), d.variance()),
        (Some(m), Some(v)) if m.abs() < 1e-6 && (v - 1.0).abs() < 1e-6
    )
}

/// Natural-scale sequence value for the family's regime: sqrt(n) for
/// standardized finite variance, the stable-domain root when the left tail
/// dominates with finite mean, and the left-tail quantile without a mean.
pub fn natural_scale(d: &StepDistribution, n: u32) -> Result<f64> {
    let nf = n as f64;
    if is_standardized(d) {
        return Ok(nf.sqrt());
    }
    if let Family::TwoSidedStable {
        alpha_left,
        w_left,
        ..
    } = d.family()
    {
        if *w_left > 0.0 && *alpha_left < 1.0 {
            // infinite mean: b_n = inf{x : P{xi < -x} < 1/n}
            return d.left_tail_quantile(1.0 / nf);
        }
        if *w_left > 0.0 && *alpha_left < 2.0 {
            // stable domain with finite mean: solve
            // Gamma(3 - alpha) n mu2(b) = (alpha - 1) b^2.
            // The difference is negative near zero, positive in the bulk
            // and negative again at infinity; the meaningful root is the
            // upper crossing, so bracket from the last positive probe.
            let alpha = *alpha_left;
            let gamma = libm::tgamma(3.0 - alpha);
            let g = |b: f64| {
                let (_, mu2) = d.truncated_moments(b);
                gamma * nf * mu2 - (alpha - 1.0) * b * b
            };
            let mut lo = None;
            let mut x = 1e-3;
            while x < 1e15 {
                let next = x * 1.5;
                if g(x) > 0.0 && g(next) < 0.0 {
                    lo = Some((x, next));
                }
                x = next;
            }
            let (blo, bhi) = lo.ok_or_else(|| {
                Error::NoRoot("no upper crossing of the natural-scale equation".into())
            })?;
            return numeric::bisect(g, blo, bhi, 1e-10);
        }
    }
    Err(Error::RegimeMismatch(
        "no natural-scale rule for this family; standardize it or use a two-sided family".into(),
    ))
}

/// Solves Q(x) = 1/n beyond the point where Q starts decreasing.
pub fn a_n(d: &StepDistribution, n: u32) -> Result<f64> {
    let nf = n as f64;
    let target = 1.0 / nf;
    let (smin, _) = d.support();
    let start = if smin.is_finite() {
        smin.abs().max(1e-3)
    } else {
        1e-3
    };
    // geometric probe for the last increase of Q
    let mut x_star = start;
    let mut prev = d.q_function(start);
    let mut x = start;
    for _ in 0..400 {
        x *= 1.25;
        let q = d.q_function(x);
        if q > prev {
            x_star = x;
        }
        prev = q;
        if x > 1e15 {
            break;
        }
    }
    let q_star = d.q_function(x_star);
    if q_star <= target {
        return Err(Error::NoRoot(format!(
            "1/n = {target:.3e} is not below Q at the monotone point ({q_star:.3e}); n too small"
        )));
    }
    let root = numeric::bisect_expanding(
        |x| d.q_function(x) - target,
        x_star,
        2.0 * x_star,
        1e300,
        1e-14,
    )?;
    let residual = (d.q_function(root) - target).abs();
    if residual > 1e-10 / nf {
        return Err(Error::NoRoot(format!(
            "residual {residual:.3e} exceeds 1e-10/n"
        )));
    }
    Ok(root)
}

/// sup over 0 <= t <= b of |F(x-t+Delta)/F(x+Delta) - 1|.
///
/// For the continuous families the defect is monotone in t, so it is
/// evaluated at t = b; lattice inputs are scanned on a 64-point t-grid.
pub fn insensitivity_defect(d: &StepDistribution, x: f64, b: f64, t_window: f64) -> Result<f64> {
    let den = d.window_mass(x, t_window);
    if !(den > 0.0) {
        return Err(Error::ZeroWindow(x));
    }
    if b <= 0.0 {
        return Ok(0.0);
    }
    if d.is_discrete() {
        let mut worst: f64 = 0.0;
        for k in 1..=64 {
            let t = b * k as f64 / 64.0;
            worst = worst.max((d.window_mass(x - t, t_window) / den - 1.0).abs());
        }
        Ok(worst)
    } else {
        Ok((d.window_mass(x - b, t_window) / den - 1.0).abs())
    }
}

/// Smallest x with insensitivity defect <= tol, by bisection.
pub fn insensitivity_boundary(
    d: &StepDistribution,
    b: f64,
    tol: f64,
    t_window: f64,
) -> Result<f64> {
    if b <= 0.0 {
        return Ok(d.support().0);
    }
    let (smin, _) = d.support();
    let t_eff = if t_window.is_finite() { t_window } else { 0.0 };
    let start = smin.max(0.0) + b + t_eff + 1e-9;
    let mut lo = start;
    let f_lo = insensitivity_defect(d, lo, b, t_window)?;
    if f_lo <= tol {
        return Ok(lo);
    }
    let cap = 1e14;
    let mut hi = 2.0 * start.max(b);
    loop {
        match insensitivity_defect(d, hi, b, t_window) {
            Ok(v) if v <= tol => break,
            Ok(_) | Err(Error::ZeroWindow(_)) => {
                if hi >= cap {
                    return Err(Error::UnboundedBoundary);
                }
                lo = hi;
                hi *= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
    numeric::bisect(
        |x| match insensitivity_defect(d, x, b, t_window) {
            Ok(v) => v - tol,
            Err(_) => f64::INFINITY,
        },
        lo,
        hi,
        1e-10,
    )
}

/// n * eps_2 and n * eta_2 at truncation level h, via the lattice oracle.
pub fn truncation_check(
    d: &StepDistribution,
    h: f64,
    n: u32,
    b: f64,
    t_window: f64,
    grid: GridSpec,
    k_big: f64,
) -> Result<(f64, f64)> {
    let pmf = lattice::discretize(d, grid)?;
    let eps = lattice::epsilon_eta(&pmf, h, 0.0, 2, t_window, RatioVariant::Epsilon)?;
    let eta = lattice::epsilon_eta(&pmf, h, k_big * b, 2, t_window, RatioVariant::Eta)?;
    Ok((n as f64 * eps, n as f64 * eta))
}

/// sup over x >= j (and inner z >= x when the window is finite) of
/// P{S_n in z+Delta, all steps <= h} / (n F(x+Delta)).
pub fn small_steps_defect(
    d: &StepDistribution,
    h: f64,
    j: f64,
    n: u32,
    t_window: f64,
    grid: GridSpec,
) -> Result<f64> {
    let pmf = lattice::discretize(d, grid)?;
    let restricted = pmf.restrict(h, None);
    if restricted.total() == 0.0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let mut sup: f64 = 0.0;
    let mut x = j;
    for _ in 0..24 {
        let den = nf * d.window_mass(x, t_window);
        if den <= 0.0 {
            break;
        }
        let num = if t_window.is_infinite() {
            // the inner supremum over z is attained at z = x
            lattice::log_tail_saddlepoint(&restricted, n, x)?.exp()
        } else {
            // scan z until the window values fade below the running max
            let mut best: f64 = 0.0;
            let mut z = x;
            loop {
                let w = lattice::log_event_saddlepoint(&restricted, n, z, t_window)?.exp();
                best = best.max(w);
                z += (0.25 * x).max(t_window);
                if w < 1e-3 * best || z > x + 40.0 * h.max(t_window) {
                    break;
                }
            }
            best
        };
        sup = sup.max(num / den);
        x *= 1.35;
        if num == 0.0 {
            break;
        }
    }
    Ok(sup)
}

/// Fixed point of J^2 = -2 n log(n F_bar(J)), the heuristic best
/// small-steps sequence. Reported as a heuristic, not a certified bound.
pub fn heuristic_j(d: &StepDistribution, n: u32) -> Result<f64> {
    let nf = n as f64;
    let j0 = (2.0 * nf * nf.ln()).sqrt();
    numeric::fixed_point(
        |j| {
            let p = nf * d.tail(j);
            if p >= 1.0 || p <= 0.0 {
                return Err(Error::NonConvergence { iters: 0 });
            }
            Ok((-2.0 * nf * p.ln()).sqrt())
        },
        j0,
        0.5,
        1e-9,
        10_000,
    )
}

fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::OptionViolation(msg.into()))
    }
}

fn require_standardized(d: &StepDistribution) -> Result<()> {
    require(
        is_standardized(d),
        "this regime needs a centered, unit-variance family (apply standardize)",
    )
}

/// Builds the full boundary tuple for one n under a named regime.
pub fn boundary(
    d: &StepDistribution,
    n: u32,
    provenance: Provenance,
    opts: &BoundaryOptions,
) -> Result<BoundarySet> {
    let nf = n as f64;
    let tw = opts.t_window;
    let local = tw.is_finite();
    let (b_n, h_n, j_n, i_n, x_n): (f64, f64, f64, Option<f64>, Option<f64>);
    match provenance {
        Provenance::Prop81 => {
            require_standardized(d)?;
            let (upper, lower) = d
                .declared_indices(tw)
                .ok_or_else(|| Error::RegimeMismatch("family is not O-regularly varying".into()))?;
            if local {
                require(upper < -3.0, format!("need upper index < -3, got {upper}"))?;
                require(
                    opts.t > -lower - 3.0,
                    format!("need t > {}", -lower - 3.0),
                )?;
            } else {
                require(upper < -2.0, format!("need upper index < -2, got {upper}"))?;
                require(
                    opts.t > -lower - 2.0,
                    format!("need t > {}", -lower - 2.0),
                )?;
            }
            require(n >= 2, "need n >= 2 so log n > 0")?;
            b_n = nf.sqrt();
            h_n = (nf / (opts.t * nf.ln())).sqrt();
            j_n = (opts.t * nf * nf.ln()).sqrt();
            i_n = insensitivity_boundary(d, b_n, opts.tol_i, tw).ok();
            x_n = None;
        }
        Provenance::Prop82 => {
            require_standardized(d)?;
            let (beta, c) = match d.family() {
                Family::LognormalHazard { beta, c, .. } => (*beta, *c),
                _ => {
                    return Err(Error::RegimeMismatch(
                        "log-power hazard regime needs a lognormal_hazard family".into(),
                    ))
                }
            };
            require(
                opts.t > 2.0f64.powf(1.0 - beta) * c,
                format!("need t > {}", 2.0f64.powf(1.0 - beta) * c),
            )?;
            b_n = nf.sqrt();
            let lb = nf.ln().powf(beta);
            h_n = (nf / (opts.t * lb)).sqrt();
            j_n = (opts.t * nf * lb).sqrt();
            i_n = insensitivity_boundary(d, b_n, opts.tol_i, tw).ok();
            x_n = None;
        }
        Provenance::Prop83 => {
            require_standardized(d)?;
            let beta = match d.family() {
                Family::WeibullHazard { beta, .. } => *beta,
                _ => {
                    return Err(Error::RegimeMismatch(
                        "regularly varying hazard regime needs a weibull_hazard family".into(),
                    ))
                }
            };
            require(opts.epsilon > 0.0, "need epsilon > 0")?;
            b_n = nf.sqrt();
            h_n = nf.powf((1.0 - beta - opts.epsilon) / (2.0 - beta));
            j_n = nf.powf((1.0 + opts.epsilon) / (2.0 - beta));
            i_n = insensitivity_boundary(d, b_n, opts.tol_i, tw).ok();
            x_n = None;
        }
        Provenance::Prop84 => {
            require_standardized(d)?;
            let (beta, c) = match d.family() {
                Family::LightSubexp { beta, c, .. } => (*beta, *c),
                _ => {
                    return Err(Error::RegimeMismatch(
                        "light subexponential regime needs a light_subexp family".into(),
                    ))
                }
            };
            require(opts.epsilon > 0.0, "need epsilon > 0")?;
            b_n = nf.sqrt();
            h_n = nf.sqrt();
            j_n = ((c + opts.epsilon).powf(1.0 / beta) * nf.powf(1.0 / (2.0 * beta))).exp();
            i_n = insensitivity_boundary(d, b_n, opts.tol_i, tw).ok();
            x_n = None;
        }
        Provenance::Prop91 => {
            let (alpha_l, beta_r, w_r) = match d.family() {
                Family::TwoSidedStable {
                    alpha_left,
                    beta_right,
                    w_right,
                    ..
                } => (*alpha_left, *beta_right, *w_right),
                _ => {
                    return Err(Error::RegimeMismatch(
                        "balanced infinite-variance regime needs a two-sided family".into(),
                    ))
                }
            };
            require(
                (beta_r - alpha_l).abs() < 1e-9 && alpha_l < 2.0 && w_r > 0.0,
                "need matching tail indices below 2 with a positive right tail",
            )?;
            if alpha_l > 1.0 {
                require(
                    d.mean().map(|m| m.abs() < 1e-6).unwrap_or(false),
                    "finite-mean balanced regime needs a centered family",
                )?;
            }
            require(opts.gamma > 0.0, "need gamma > 0")?;
            let t_n = opts.t * nf;
            let g_half = d.two_sided_tail(t_n / 2.0);
            require(
                nf * d.two_sided_tail(t_n) <= 0.5,
                "n G(t_n) must already be small; increase t",
            )?;
            require(nf * g_half < 1.0, "need n G(t_n/2) < 1")?;
            h_n = t_n / (-2.0 * opts.gamma * (nf * g_half).ln());
            b_n = h_n;
            j_n = t_n / 2.0;
            i_n = Some(t_n / 2.0);
            x_n = Some(t_n);
        }
        Provenance::Prop92 => {
            let (alpha_l, beta_r, w_l) = match d.family() {
                Family::TwoSidedStable {
                    alpha_left,
                    beta_right,
                    w_left,
                    ..
                } => (*alpha_left, *beta_right, *w_left),
                _ => {
                    return Err(Error::RegimeMismatch(
                        "heavy-left-tail regime needs a two-sided family".into(),
                    ))
                }
            };
            require(
                alpha_l > 1.0 && alpha_l < 2.0 && beta_r > alpha_l && w_l > 0.0,
                "need left index in (1,2) strictly below the right index",
            )?;
            require(
                d.mean().map(|m| m.abs() < 1e-6).unwrap_or(false),
                "regime needs a centered family (apply standardize center-only)",
            )?;
            require(opts.t > 1.0, "need t > 1")?;
            b_n = natural_scale(d, n)?;
            let l = (beta_r - alpha_l) / (alpha_l - 1.0) * nf.ln();
            require(l > 0.0, "need log n > 0")?;
            h_n = l.powf(-1.0 / alpha_l) * b_n;
            j_n = opts.t * l.powf((alpha_l - 1.0) / alpha_l) * b_n;
            i_n = insensitivity_boundary(d, b_n, opts.tol_i, tw).ok();
            x_n = None;
        }
        Provenance::Prop93 => {
            let (alpha_l, beta_r, w_l) = match d.family() {
                Family::TwoSidedStable {
                    alpha_left,
                    beta_right,
                    w_left,
                    ..
                } => (*alpha_left, *beta_right, *w_left),
                _ => {
                    return Err(Error::RegimeMismatch(
                        "infinite-mean regime needs a two-sided family".into(),
                    ))
                }
            };
            require(
                alpha_l < 1.0 && beta_r > alpha_l && w_l > 0.0,
                "need left index in (0,1) below the right index",
            )?;
            require(opts.epsilon > 0.0, "need epsilon > 0")?;
            b_n = natural_scale(d, n)?;
            h_n = nf.powf(1.0 / beta_r);
            j_n = nf.powf(1.0 / beta_r + opts.epsilon);
            i_n = insensitivity_boundary(d, b_n, opts.tol_i, tw).ok();
            x_n = None;
        }
        Provenance::Heuristic24 => {
            require_standardized(d)?;
            j_n = heuristic_j(d, n)?;
            b_n = nf.sqrt();
            h_n = nf / j_n;
            i_n = insensitivity_boundary(d, b_n, opts.tol_i, tw).ok();
            x_n = None;
        }
        Provenance::Corollary21 => {
            require(
                d.mean().map(|m| m.abs() < 1e-6).unwrap_or(false),
                "linear-boundary mode needs a centered family",
            )?;
            require(
                opts.kappa > 1.0 && opts.kappa <= 2.0,
                "need kappa in (1, 2]",
            )?;
            require(opts.a_lin > 0.0, "need a > 0")?;
            // E|xi|^kappa < inf: for power families this is an index check
            if let Some((upper, _)) = d.declared_indices(f64::INFINITY) {
                require(
                    -upper > opts.kappa,
                    format!("moment of order {} diverges (tail index {upper})", opts.kappa),
                )?;
            }
            let a = opts.a_lin;
            b_n = (nf * a).powf(1.0 / opts.kappa);
            h_n = b_n;
            j_n = a * nf / 2.0;
            i_n = Some(a * nf / 2.0);
            x_n = Some(a * nf);
        }
    }
    let (i_n, i_n_absent, x_n) = match (i_n, x_n) {
        (_, Some(x)) => (i_n, false, x),
        (Some(i), None) => (Some(i), false, i + j_n),
        (None, None) => (None, true, opts.multiplier * j_n),
    };
    require(
        h_n <= j_n * (1.0 + 1e-12),
        format!("truncation level {h_n} exceeds small-steps boundary {j_n}"),
    )?;
    Ok(BoundarySet {
        n,
        b_n,
        a_n: a_n(d, n).ok(),
        h_n,
        i_n,
        j_n,
        x_n,
        i_n_absent,
        provenance,
        options: *opts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::StandardizeMode;

    fn std_pareto() -> StepDistribution {
        StepDistribution::pareto(2.5, 1.0)
            .unwrap()
            .standardize(StandardizeMode::Full)
            .unwrap()
    }

    fn sym_pareto15() -> StepDistribution {
        StepDistribution::two_sided(1.5, 1.5, 0.5, 0.5, 1.0).unwrap()
    }

    #[test]
    fn natural_scale_regimes() {
        let d = std_pareto();
        assert!((natural_scale(&d, 100).unwrap() - 10.0).abs() < 1e-12);

        // infinite mean: left-tail quantile
        let im = StepDistribution::two_sided(0.5, 1.0, 1.0, 0.0, 1.0).unwrap();
        assert!((natural_scale(&im, 100).unwrap() - 1e4).abs() < 1e-6);

        // stable domain: root of the truncated-moment equation, checked
        // against an independent quadrature + scan oracle
        let sd = StepDistribution::two_sided(1.5, 3.0, 0.5, 0.5, 1.0).unwrap();
        let b = natural_scale(&sd, 1000).unwrap();
        let gamma_15 = libm::tgamma(1.5);
        let mu2_quad = |x: f64| {
            crate::numeric::integrate(|u| u * u * sd.density(u), -x, x, 1e-11).unwrap()
        };
        let f = |x: f64| gamma_15 * 1000.0 * mu2_quad(x) - 0.5 * x * x;
        assert!(f(b * 0.999) > 0.0 && f(b * 1.001) < 0.0, "b = {b}");
    }

    #[test]
    fn a_n_rademacher_exact() {
        let r = StepDistribution::rademacher();
        let a = a_n(&r, 400).unwrap();
        assert_eq!(a, 20.0);
        assert_eq!(r.q_function(a) - 1.0 / 400.0, 0.0);
    }

    #[test]
    fn a_n_symmetric_pareto() {
        let d = sym_pareto15();
        let a = a_n(&d, 1000).unwrap();
        assert!((d.q_function(a) - 1e-3).abs() <= 1e-10 / 1000.0);
        // re-derived root of 3(sqrt x - 1)/x^2 + x^-1.5 = 1e-3
        assert!((a - 243.86).abs() < 0.2, "a_1000 = {a}");
        // asymptote: Q ~ 4 x^-1.5 so a_n ~ (4n)^(2/3)
        let a4 = a_n(&d, 10_000).unwrap();
        let asym = (4.0f64 * 10_000.0).powf(2.0 / 3.0);
        assert!((a4 / asym - 1.0).abs() < 0.05, "{a4} vs {asym}");
    }

    #[test]
    fn insensitivity_closed_form() {
        let d = StepDistribution::pareto(2.5, 1.0).unwrap();
        let x = insensitivity_boundary(&d, 10.0, 0.1, f64::INFINITY).unwrap();
        // solves (x/(x-10))^2.5 = 1.1
        let q = 1.1f64.powf(1.0 / 2.5);
        let expect = q * 10.0 / (q - 1.0);
        assert!((x - expect).abs() < 1e-6, "{x} vs {expect}");
        assert!((x - 267.33).abs() < 0.01);

        // zero b: boundary collapses to the support edge
        assert_eq!(insensitivity_boundary(&d, 0.0, 0.1, f64::INFINITY).unwrap(), 1.0);
    }

    #[test]
    fn insensitivity_unbounded_for_near_linear_hazard() {
        // R(x) ~ c x / log^0.01 x decays too slowly to become insensitive
        // at any reachable x
        let d = StepDistribution::light_subexp(0.01, 1.0).unwrap();
        assert!(matches!(
            insensitivity_boundary(&d, 5.0, 0.1, f64::INFINITY),
            Err(Error::UnboundedBoundary)
        ));
    }

    #[test]
    fn boundary_goldens() {
        let d = std_pareto();
        let opts = BoundaryOptions {
            t: 1.0,
            ..Default::default()
        };
        let b = boundary(&d, 100, Provenance::Prop81, &opts).unwrap();
        assert!((b.j_n - 21.460).abs() / 21.460 < 1e-3, "J = {}", b.j_n);
        assert!((b.j_n - (100.0f64 * 100.0f64.ln()).sqrt()).abs() < 1e-12);
        assert!(b.h_n <= b.j_n);
        assert_eq!(b.x_n, b.i_n.unwrap() + b.j_n);

        let lh = StepDistribution::lognormal_hazard(2.0, 0.5, 0.0)
            .unwrap()
            .standardize(StandardizeMode::Full)
            .unwrap();
        let opts = BoundaryOptions {
            t: 0.5,
            ..Default::default()
        };
        let b = boundary(&lh, 100, Provenance::Prop82, &opts).unwrap();
        assert!((b.j_n - 32.564).abs() / 32.564 < 1e-3, "J = {}", b.j_n);

        let ls = StepDistribution::light_subexp(1.0, 1.0)
            .unwrap()
            .standardize(StandardizeMode::Full)
            .unwrap();
        let opts = BoundaryOptions {
            epsilon: 0.5,
            ..Default::default()
        };
        let b = boundary(&ls, 16, Provenance::Prop84, &opts).unwrap();
        assert!((b.j_n - 403.43).abs() / 403.43 < 1e-3, "J = {}", b.j_n);

        let sym = sym_pareto15();
        let opts = BoundaryOptions {
            t: 1.0,
            gamma: 3.0,
            ..Default::default()
        };
        let b = boundary(&sym, 10_000, Provenance::Prop91, &opts).unwrap();
        assert!((b.h_n - 467.4).abs() / 467.4 < 1e-3, "h = {}", b.h_n);
        assert_eq!(b.x_n, 10_000.0);
        assert_eq!(b.b_n, b.h_n);
    }

    #[test]
    fn boundary_other_regimes() {
        // heavy left tail with finite mean: natural scale from the
        // truncated-moment equation, h and J from the log-power forms
        let d = StepDistribution::two_sided(1.5, 3.0, 0.5, 0.5, 1.0)
            .unwrap()
            .standardize(StandardizeMode::CenterOnly)
            .unwrap();
        let opts = BoundaryOptions {
            t: 2.0,
            ..Default::default()
        };
        let b = boundary(&d, 1000, Provenance::Prop92, &opts).unwrap();
        let l = (3.0 - 1.5) / (1.5 - 1.0) * 1000.0f64.ln();
        assert!((b.h_n - l.powf(-1.0 / 1.5) * b.b_n).abs() < 1e-9);
        assert!((b.j_n - 2.0 * l.powf(0.5 / 1.5) * b.b_n).abs() < 1e-9);
        assert!(b.h_n <= b.j_n);
        assert_eq!(b.x_n, b.i_n.unwrap() + b.j_n);
        // t <= 1 is rejected
        let bad = BoundaryOptions {
            t: 1.0,
            ..Default::default()
        };
        assert!(boundary(&d, 1000, Provenance::Prop92, &bad).is_err());

        // infinite mean: left-tail quantile scale, power-form h and J
        let im = StepDistribution::two_sided(0.5, 1.0, 0.5, 0.5, 1.0).unwrap();
        let opts = BoundaryOptions {
            epsilon: 0.5,
            ..Default::default()
        };
        let b = boundary(&im, 100, Provenance::Prop93, &opts).unwrap();
        assert!((b.b_n - 2500.0).abs() < 1e-6); // (n w_l)^(1/alpha) = 50^2
        assert!((b.h_n - 100.0).abs() < 1e-9);
        assert!((b.j_n - 1000.0).abs() < 1e-9);

        // fixed-point regime pairs h = n / J
        let sp = std_pareto();
        let b = boundary(&sp, 100, Provenance::Heuristic24, &BoundaryOptions::default()).unwrap();
        assert!((b.h_n * b.j_n - 100.0).abs() < 1e-6);
        assert!(b.j_n > b.h_n);

        // linear boundary x_n = a n
        let r = StepDistribution::rademacher();
        let opts = BoundaryOptions {
            a_lin: 0.5,
            kappa: 2.0,
            ..Default::default()
        };
        let b = boundary(&r, 64, Provenance::Corollary21, &opts).unwrap();
        assert_eq!(b.x_n, 32.0);
        assert!((b.b_n - 32.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn insensitivity_boundary_monotone_in_tol() {
        let d = StepDistribution::pareto(2.5, 1.0).unwrap();
        let strict = insensitivity_boundary(&d, 10.0, 0.02, f64::INFINITY).unwrap();
        let loose = insensitivity_boundary(&d, 10.0, 0.1, f64::INFINITY).unwrap();
        assert!(loose <= strict);
    }

    #[test]
    fn insensitivity_defect_lattice_scan() {
        // lattice inputs scan a t-grid instead of assuming monotonicity
        let d = StepDistribution::lattice(vec![(1.0, 0.6), (2.0, 0.3), (4.0, 0.1)]).unwrap();
        let v = insensitivity_defect(&d, 3.5, 1.0, 1.0).unwrap();
        // at x = 3.5, T = 1 the window holds the atom at 4 (mass 0.1);
        // shifting down by t = 1 gives the empty window (2.5, 3.5]
        assert!((v - 1.0).abs() < 1e-12, "defect {v}");
    }

    #[test]
    fn boundary_validation_errors() {
        let d = std_pareto();
        // t too small for the index inequality: need t > 0.5
        let opts = BoundaryOptions {
            t: 0.4,
            ..Default::default()
        };
        assert!(matches!(
            boundary(&d, 100, Provenance::Prop81, &opts),
            Err(Error::OptionViolation(_))
        ));
        // non-standardized input
        let raw = StepDistribution::pareto(2.5, 1.0).unwrap();
        assert!(boundary(&raw, 100, Provenance::Prop81, &BoundaryOptions::default()).is_err());
        // regime mismatch: balanced regime on a one-sided family
        assert!(matches!(
            boundary(&d, 100, Provenance::Prop91, &BoundaryOptions::default()),
            Err(Error::RegimeMismatch(_))
        ));
    }

    #[test]
    fn boundary_deterministic() {
        let d = std_pareto();
        let opts = BoundaryOptions::default();
        let a = boundary(&d, 50, Provenance::Prop81, &opts).unwrap();
        let b = boundary(&d, 50, Provenance::Prop81, &opts).unwrap();
        assert_eq!(a.x_n.to_bits(), b.x_n.to_bits());
        assert_eq!(a.h_n.to_bits(), b.h_n.to_bits());
    }

    #[test]
    fn heuristic_fixed_point() {
        let d = StepDistribution::pareto(2.5, 1.0).unwrap();
        let j = heuristic_j(&d, 100).unwrap();
        // residual of J^2 = 2 n (2.5 ln J - ln n)
        let res = j * j - 2.0 * 100.0 * (2.5 * j.ln() - 100.0f64.ln());
        assert!(res.abs() < 1e-4 * j * j, "residual {res}");
        assert!((j - 26.94).abs() < 0.02, "J = {j}");

        // the classical-scale ratio approaches 1 from above, slowly;
        // log-space iterate so huge n do not underflow the tail
        let mut prev = f64::INFINITY;
        for n in [1e8, 1e20, 1e80, 1e300] {
            let nf = n as f64;
            let j0 = (2.0 * nf * nf.ln()).sqrt();
            let jj = crate::numeric::fixed_point(
                |j| {
                    let log_p = nf.ln() - 2.5 * j.ln();
                    Ok((-2.0 * nf * log_p).sqrt())
                },
                j0,
                0.5,
                1e-12,
                10_000,
            )
            .unwrap();
            let ratio = jj / (0.5 * nf * nf.ln()).sqrt();
            assert!(ratio > 1.0 && ratio < prev, "n = {n}: ratio {ratio}");
            prev = ratio;
        }
        assert!(prev < 1.05);
    }

    #[test]
    fn heuristic_degenerate_rejected() {
        // atoms only: n F_bar(J) hits exact powers and the fixed point
        // cannot move; must report non-convergence rather than loop
        let d = StepDistribution::lattice(vec![(0.0, 0.999), (1.0, 0.001)]).unwrap();
        assert!(heuristic_j(&d, 10).is_err());
    }

    #[test]
    fn natural_scale_tightness_trace() {
        // n G(K sqrt n) is nonincreasing in K for standardized families
        let d = std_pareto();
        for n in [10u32, 100, 1000] {
            let b = (n as f64).sqrt();
            let mut prev = f64::INFINITY;
            for k in [1.0, 2.0, 4.0, 8.0, 16.0] {
                let v = n as f64 * d.two_sided_tail(k * b);
                assert!(v <= prev + 1e-15);
                prev = v;
            }
        }
    }

    #[test]
    fn small_steps_defect_cases() {
        let grid = GridSpec {
            delta: 0.0625,
            lo: -0.5,
            hi: 400.0,
        };
        let d = std_pareto();
        // h below the support minimum: empty event
        let z = small_steps_defect(&d, -1.0, 10.0, 8, f64::INFINITY, grid).unwrap();
        assert_eq!(z, 0.0);

        // bounded steps cannot pass n h: defect 0 beyond
        let coin = StepDistribution::coin();
        let cg = GridSpec {
            delta: 1.0,
            lo: 0.0,
            hi: 16.0,
        };
        let v = small_steps_defect(&coin, 1.0, 9.0, 8, f64::INFINITY, cg).unwrap();
        assert_eq!(v, 0.0);

        // standardized heavy tail: defect below one and shrinking in J
        let n = 50;
        let h = (50.0f64 / 50.0f64.ln()).sqrt();
        let j = (2.0 * 50.0 * 50.0f64.ln()).sqrt();
        let d1 = small_steps_defect(&d, h, j, n, f64::INFINITY, grid).unwrap();
        let d2 = small_steps_defect(&d, h, 2.0 * j, n, f64::INFINITY, grid).unwrap();
        assert!(d1 < 1.0, "defect {d1}");
        assert!(d2 < d1);
    }

    #[test]
    fn truncation_check_trace() {
        let d = StepDistribution::pareto(2.5, 1.0).unwrap();
        let grid = GridSpec {
            delta: 0.05,
            lo: 1.0,
            hi: 1000.0,
        };
        let mut prev = f64::INFINITY;
        let mut prev_nf_tail = f64::INFINITY;
        for n in [100u32, 1000, 10_000] {
            let nf = n as f64;
            let h = (nf / nf.ln()).sqrt();
            let (n_eps, n_eta) = truncation_check(&d, h, n, nf.sqrt(), f64::INFINITY, grid, 1.0)
                .unwrap();
            assert!(n_eps < prev, "n = {n}: {n_eps}");
            assert_eq!(n_eta, 0.0); // no left tail at all
            // consistency: n F_bar(h_n) shrinks along the same trace
            assert!(nf * d.tail(h) < prev_nf_tail);
            prev_nf_tail = nf * d.tail(h);
            prev = n_eps;
        }
    }
}
