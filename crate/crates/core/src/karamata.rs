//! Numerical regular-variation and subexponentiality diagnostics:
//! Matuszewska index estimation on finite grids, long-tail and
//! intermediate-regular-variation defects, and self-convolution ratio
//! checks with sufficient-condition certificates for hazard-form tails.

use crate::dist::StepDistribution;
use crate::error::{Error, Result};
use crate::numeric::{integrate, integrate_to_inf};

/// Estimates fall below this are reported as -inf (super-polynomial decay).
const INDEX_FLOOR: f64 = -50.0;

/// A positive evaluable tail-like function on `[domain_low, inf)`.
pub struct TailFunction {
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    domain_low: f64,
}

impl TailFunction {
    pub fn new(domain_low: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        TailFunction {
            f: Box::new(f),
            domain_low,
        }
    }

    pub fn from_tail(d: &StepDistribution) -> Self {
        let d = d.clone();
        let (lo, _) = d.support();
        TailFunction::new(lo.max(1e-9) + 1e-9, move |x| d.tail(x))
    }

    pub fn from_window(d: &StepDistribution, t: f64) -> Self {
        let d = d.clone();
        let (lo, _) = d.support();
        TailFunction::new(lo.max(1e-9) + 1e-9, move |x| d.window_mass(x, t))
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn domain_low(&self) -> f64 {
        self.domain_low
    }
}

/// Finite-grid Matuszewska index estimate and the decade it was read from.
#[derive(Clone, Copy, Debug)]
pub struct IndexEstimate {
    pub upper: f64,
    pub lower: f64,
    pub decade: (f64, f64),
}

/// Growth-exponent estimates of f(xy)/f(x) over the largest decade of a
/// geometric x-grid. Super-polynomial decay comes back as -inf.
pub fn matuszewska(
    f: &TailFunction,
    x_lo: f64,
    x_hi: f64,
    x_points: usize,
    y_grid: &[f64],
) -> Result<IndexEstimate> {
    if y_grid.is_empty() || x_points < 2 {
        return Err(Error::EmptyRange);
    }
    if x_hi / x_lo < 999.0 {
        return Err(Error::Config {
            field: "x_grid".into(),
            msg: "grid must span at least three decades".into(),
        });
    }
    let dec_lo = x_hi / 10.0;
    let ratio = (x_hi / dec_lo).powf(1.0 / (x_points - 1) as f64);
    let mut upper = f64::NEG_INFINITY;
    let mut lower = f64::INFINITY;
    for &y in y_grid {
        if y <= 1.0 {
            continue;
        }
        let mut est_up = f64::NEG_INFINITY;
        let mut est_lo = f64::INFINITY;
        let mut x = dec_lo.max(f.domain_low);
        for _ in 0..x_points {
            let (fx, fxy) = (f.eval(x), f.eval(x * y));
            if fx < 0.0 || fxy < 0.0 || fx.is_nan() || fxy.is_nan() {
                return Err(Error::Config {
                    field: "tail_function".into(),
                    msg: format!("nonpositive value near x = {x}"),
                });
            }
            if fx > 0.0 {
                // underflowed ratios read as unbounded decay
                let e = if fxy > 0.0 {
                    (fxy / fx).ln() / y.ln()
                } else {
                    f64::NEG_INFINITY
                };
                est_up = est_up.max(e);
                est_lo = est_lo.min(e);
            }
            x *= ratio;
        }
        if est_lo < f64::INFINITY {
            upper = upper.max(est_up);
            lower = lower.min(est_lo);
        }
    }
    if lower == f64::INFINITY {
        // the whole decade underflowed
        upper = f64::NEG_INFINITY;
        lower = f64::NEG_INFINITY;
    }
    Ok(IndexEstimate {
        upper: if upper < INDEX_FLOOR {
            f64::NEG_INFINITY
        } else {
            upper
        },
        lower: if lower < INDEX_FLOOR {
            f64::NEG_INFINITY
        } else {
            lower
        },
        decade: (dec_lo, x_hi),
    })
}

/// |F(x-y+Delta)/F(x+Delta) - 1| for an arbitrary window function.
pub fn long_tail_defect_fn(window: impl Fn(f64) -> f64, x: f64, y: f64) -> Result<f64> {
    let den = window(x);
    if !(den > 0.0) {
        return Err(Error::ZeroWindow(x));
    }
    Ok((window(x - y) / den - 1.0).abs())
}

/// Long-tail defect of a step distribution at shift y and window T.
pub fn long_tail_defect(d: &StepDistribution, x: f64, y: f64, t: f64) -> Result<f64> {
    long_tail_defect_fn(|u| d.window_mass(u, t), x, y)
}

/// Max/min of f(xy)/f(x) over the top decade below x_max.
pub fn irv_defect(f: &TailFunction, y: f64, x_max: f64) -> Result<(f64, f64)> {
    if !(1.0..=2.0).contains(&y) {
        return Err(Error::Config {
            field: "y".into(),
            msg: format!("y = {y}, need y in [1, 2]"),
        });
    }
    let points = 64;
    let lo = (x_max / 10.0).max(f.domain_low);
    let ratio = (x_max / lo).powf(1.0 / (points - 1) as f64);
    let mut sup = f64::NEG_INFINITY;
    let mut inf = f64::INFINITY;
    let mut x = lo;
    for _ in 0..points {
        let fx = f.eval(x);
        if fx > 0.0 {
            let r = f.eval(x * y) / fx;
            sup = sup.max(r);
            inf = inf.min(r);
        }
        x *= ratio;
    }
    Ok((sup, inf))
}

/// Self-convolution ratio r(x) and the companion integral of H.
#[derive(Clone, Copy, Debug)]
pub struct SdRatio {
    pub ratio: f64,
    pub integral: f64,
}

/// r(x) = int_0^{x/2} H(y) H(x-y) dy / H(x); the limit for the
/// subexponential-density class equals int_0^inf H.
pub fn sd_ratio(h_fn: &TailFunction, x: f64) -> Result<SdRatio> {
    let hx = h_fn.eval(x);
    if !(hx > 0.0) {
        return Err(Error::ZeroWindow(x));
    }
    let lo = h_fn.domain_low.max(0.0);
    let integral = integrate_to_inf(|y| h_fn.eval(y), lo, 1e-10)?;
    if !integral.is_finite() || integral > 1e12 {
        return Err(Error::QuadratureNonConvergence { achieved: f64::INFINITY });
    }
    // split at sqrt(x) to isolate the long-tailed head from the body
    let split = x.sqrt().clamp(lo, x / 2.0);
    let head = integrate(|y| h_fn.eval(y) * h_fn.eval(x - y), lo, split, 1e-9)?;
    let body = integrate(|y| h_fn.eval(y) * h_fn.eval(x - y), split, x / 2.0, 1e-9)?;
    Ok(SdRatio {
        ratio: (head + body) / hx,
        integral,
    })
}

/// Hazard decomposition H = p exp(-R) used by the sufficient conditions.
#[derive(Clone, Copy, Debug)]
pub enum HazardSpec {
    /// R(x) = c log^beta x (lognormal-type), beta > 1.
    LogPower { beta: f64, c: f64 },
    /// R regularly varying with index beta in (0,1) (Weibull-type).
    RegVarPower { beta: f64, c: f64 },
    /// R(x) = c x / log^beta x ("light" subexponential), beta > 0.
    LinearOverLogPower { beta: f64, c: f64 },
    /// R(x) = c x (exponential hazard; certifies nothing).
    Linear { c: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdVerdict {
    PassB1,
    PassB2,
    NotApplicable,
}

#[derive(Clone, Debug)]
pub struct SdCertificate {
    pub verdict: SdVerdict,
    pub detail: String,
}

impl HazardSpec {
    pub fn from_family(d: &StepDistribution) -> Option<HazardSpec> {
        match d.family() {
            crate::dist::Family::LognormalHazard { beta, c, .. } => Some(HazardSpec::LogPower {
                beta: *beta,
                c: *c,
            }),
            crate::dist::Family::WeibullHazard { beta, c } => Some(HazardSpec::RegVarPower {
                beta: *beta,
                c: *c,
            }),
            crate::dist::Family::LightSubexp { beta, c, .. } => {
                Some(HazardSpec::LinearOverLogPower {
                    beta: *beta,
                    c: *c,
                })
            }
            _ => None,
        }
    }

    fn r(&self, x: f64) -> f64 {
        match self {
            HazardSpec::LogPower { beta, c } => c * x.ln().powf(*beta),
            HazardSpec::RegVarPower { beta, c } => c * x.powf(*beta),
            HazardSpec::LinearOverLogPower { beta, c } => c * x / x.ln().powf(*beta),
            HazardSpec::Linear { c } => c * x,
        }
    }

    fn r_prime(&self, x: f64) -> f64 {
        match self {
            HazardSpec::LogPower { beta, c } => c * beta * x.ln().powf(beta - 1.0) / x,
            HazardSpec::RegVarPower { beta, c } => c * beta * x.powf(beta - 1.0),
            HazardSpec::LinearOverLogPower { beta, c } => {
                let l = x.ln();
                c / l.powf(*beta) * (1.0 - beta / l)
            }
            HazardSpec::Linear { c } => *c,
        }
    }

    /// The comparison function z for the first sufficient condition.
    fn z_choice(&self) -> Option<Box<dyn Fn(f64) -> (f64, f64)>> {
        // returns (z, z') pairs
        match *self {
            HazardSpec::LogPower { beta, c } => Some(Box::new(move |x: f64| {
                let l = x.ln();
                (c * l.powf(beta), c * beta * l.powf(beta - 1.0) / x)
            })),
            HazardSpec::RegVarPower { beta, .. } => {
                let a = 0.5 * (beta + 1.0); // in (beta, 1)
                Some(Box::new(move |x: f64| {
                    (x.powf(a), a * x.powf(a - 1.0))
                }))
            }
            _ => None,
        }
    }
}

/// Certifies membership of the subexponential-density class through one of
/// the two sufficient conditions: the concave-comparison route (checks
/// limsup x z'/z < 1 with R/z nonincreasing and R >> log), or the
/// integrability route (R' ultimately nonincreasing with
/// int e^{y R'(y)} H(y) dy finite).
pub fn sd_sufficient(spec: &HazardSpec) -> SdCertificate {
    let grid: Vec<f64> = (0..40).map(|k| 1e3 * 1.6f64.powi(k)).collect();

    // condition 1: z-comparison
    if let Some(z) = spec.z_choice() {
        let mut ok = true;
        let mut sup_ratio: f64 = 0.0;
        for &x in &grid {
            let (zx, zpx) = z(x);
            let ratio = x * zpx / zx;
            sup_ratio = sup_ratio.max(ratio);
            if ratio >= 0.98 {
                ok = false;
            }
            // R/z must not increase along the grid
        }
        let mut rz_prev = f64::INFINITY;
        let mut log_ok = true;
        for &x in &grid {
            let rz = spec.r(x) / z(x).0;
            if rz > rz_prev * (1.0 + 1e-9) {
                ok = false;
            }
            rz_prev = rz;
            if spec.r(x) < 10.0 * x.ln() && x > 1e9 {
                log_ok = false;
            }
        }
        if ok && log_ok {
            return SdCertificate {
                verdict: SdVerdict::PassB1,
                detail: format!(
                    "concave comparison holds: sup x z'/z = {sup_ratio:.4} < 1 on [1e3, 1e11], R/z nonincreasing, R >> log x"
                ),
            };
        }
    }

    // condition 2: integrability of e^{y R'(y)} H(y)
    let mut rp_prev = f64::INFINITY;
    let mut nonincreasing = true;
    for &x in &grid {
        let rp = spec.r_prime(x);
        if rp > rp_prev * (1.0 + 1e-9) {
            nonincreasing = false;
        }
        rp_prev = rp;
    }
    if nonincreasing {
        // integrand e^{y R'(y) - R(y)}; finite iff the exponent diverges down
        let exponent = |y: f64| y * spec.r_prime(y) - spec.r(y);
        let diverges_down = exponent(1e8) < -50.0 && exponent(1e8) < exponent(1e4);
        if diverges_down {
            let tail_int = integrate_to_inf(|y| exponent(y).exp(), 100.0, 1e-8);
            if let Ok(v) = tail_int {
                if v.is_finite() {
                    return SdCertificate {
                        verdict: SdVerdict::PassB2,
                        detail: format!(
                            "R' ultimately nonincreasing and int e^(yR')H dy = {v:.4e} converges"
                        ),
                    };
                }
            }
        }
    }

    SdCertificate {
        verdict: SdVerdict::NotApplicable,
        detail: "neither sufficient condition certifies membership".into(),
    }
}

/// Family-level certificate; None-decomposition families are not applicable.
pub fn sd_sufficient_family(d: &StepDistribution) -> SdCertificate {
    match HazardSpec::from_family(d) {
        Some(spec) => sd_sufficient(&spec),
        None => SdCertificate {
            verdict: SdVerdict::NotApplicable,
            detail: "family has no hazard decomposition of the required form".into(),
        },
    }
}
