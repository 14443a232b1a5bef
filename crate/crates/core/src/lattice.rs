//! Exact sub-probability arithmetic on uniform grids: the ground-truth
//! oracle for n-step sum probabilities, restricted walks, and the
//! two-large-jumps ratio quantities.
//!
//! Off-grid mass is tracked, never dropped. Each spill bucket carries an
//! attribution bound (a floor under high spill, a ceiling over low spill)
//! so tail queries can decide whether spilled mass provably belongs to the
//! probed event. `smear` records the worst-case rounding of represented
//! values against the continuous law that produced the grid.

use std::cell::RefCell;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::dist::{Family, StepDistribution};
use crate::error::{Error, Result};
use crate::numeric::Accumulator;

const MAX_CELLS: usize = 1 << 24;
const NEG_CLIP: f64 = 1e-13;
const IDX_TOL: f64 = 1e-6;

/// Sub-probability mass vector on a uniform value grid.
#[derive(Clone, Debug)]
pub struct LatticePmf {
    origin: f64,
    step: f64,
    masses: Vec<f64>,
    spill_low: f64,
    spill_high: f64,
    /// Spilled-high mass has final value >= high_floor.
    high_floor: f64,
    /// Spilled-low mass has final value <= low_ceil.
    low_ceil: f64,
    /// Worst-case |true - represented| per accumulated step.
    smear: f64,
    /// Proven bound on discarded mass with no location information.
    /// Restricted-walk truncations whose measured spill is FFT noise are
    /// replaced by an exponential-bound certificate and land here.
    dust: f64,
    /// Per-cell FFT roundoff scale; cells below it are indistinguishable
    /// from zero and never treated as spillable mass.
    noise_floor: f64,
}

/// How queries treat ambiguity from spill and smear.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpillMode {
    /// Point values; abort when unattributable spill is non-negligible.
    Strict,
    /// Interval brackets, always valid.
    Bound,
}

/// A probability query result with rigorous brackets.
#[derive(Clone, Copy, Debug)]
pub struct ProbBracket {
    pub lower: f64,
    pub upper: f64,
    pub point: f64,
}

impl LatticePmf {
    pub fn from_parts(origin: f64, step: f64, masses: Vec<f64>) -> Self {
        LatticePmf {
            origin,
            step,
            masses,
            spill_low: 0.0,
            spill_high: 0.0,
            high_floor: f64::INFINITY,
            low_ceil: f64::NEG_INFINITY,
            smear: 0.0,
            dust: 0.0,
            noise_floor: 0.0,
        }
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn spill_low(&self) -> f64 {
        self.spill_low
    }

    pub fn spill_high(&self) -> f64 {
        self.spill_high
    }

    pub fn smear(&self) -> f64 {
        self.smear
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Value represented by cell i.
    pub fn value(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.step
    }

    /// In-grid mass.
    pub fn total_in_grid(&self) -> f64 {
        let mut acc = Accumulator::default();
        for &m in &self.masses {
            acc.add(m);
        }
        acc.value()
    }

    /// In-grid mass plus both spills.
    pub fn total(&self) -> f64 {
        self.total_in_grid() + self.spill_low + self.spill_high
    }

    pub fn dust(&self) -> f64 {
        self.dust
    }

    /// Attribution bounds (high-spill floor, low-spill ceiling).
    pub fn spill_bounds(&self) -> (f64, f64) {
        (self.high_floor, self.low_ceil)
    }

    fn total_all(&self) -> f64 {
        self.total() + self.dust
    }

    /// In-grid mean (ignores spill).
    pub fn mean_in_grid(&self) -> f64 {
        let w = self.total_in_grid();
        let mut acc = Accumulator::default();
        for (i, &m) in self.masses.iter().enumerate() {
            acc.add(self.value(i) * m);
        }
        acc.value() / w
    }

    pub fn variance_in_grid(&self) -> f64 {
        let w = self.total_in_grid();
        let mu = self.mean_in_grid();
        let mut acc = Accumulator::default();
        for (i, &m) in self.masses.iter().enumerate() {
            let d = self.value(i) - mu;
            acc.add(d * d * m);
        }
        acc.value() / w
    }

    /// Smallest represented value carrying mass; None when empty.
    pub fn min_support(&self) -> Option<f64> {
        self.masses
            .iter()
            .position(|&m| m > 0.0)
            .map(|i| self.value(i))
    }

    pub fn max_support(&self) -> Option<f64> {
        self.masses
            .iter()
            .rposition(|&m| m > 0.0)
            .map(|i| self.value(i))
    }

    /// Restrict to values in [lo, hi]; outside mass becomes spill.
    pub fn truncate_to(&self, lo: f64, hi: f64) -> LatticePmf {
        let start = ((lo - self.origin) / self.step - IDX_TOL).ceil().max(0.0) as usize;
        let endf = ((hi - self.origin) / self.step + IDX_TOL).floor();
        let end = if endf < 0.0 {
            0
        } else {
            ((endf as usize) + 1).min(self.masses.len())
        };
        let mut low_extra = 0.0;
        let mut high_extra = 0.0;
        for (i, &m) in self.masses.iter().enumerate() {
            if m <= self.noise_floor {
                continue;
            }
            if i < start {
                low_extra += m;
            } else if i >= end {
                high_extra += m;
            }
        }
        let kept: Vec<f64> = if start < end {
            self.masses[start..end].to_vec()
        } else {
            Vec::new()
        };
        let mut high_floor = self.high_floor;
        if high_extra > 0.0 {
            high_floor = high_floor.min(hi);
        }
        let mut low_ceil = self.low_ceil;
        if low_extra > 0.0 {
            low_ceil = low_ceil.max(lo);
        }
        LatticePmf {
            origin: self.origin + start as f64 * self.step,
            step: self.step,
            masses: kept,
            spill_low: self.spill_low + low_extra,
            spill_high: self.spill_high + high_extra,
            high_floor,
            low_ceil,
            smear: self.smear,
            dust: self.dust,
            noise_floor: self.noise_floor,
        }
    }

    /// Keep only values <= upper (and >= lower when given); removed mass is
    /// excluded outright, not spilled — this realizes a step restriction.
    pub fn restrict(&self, upper: f64, lower: Option<f64>) -> LatticePmf {
        let mut masses = self.masses.clone();
        for (i, m) in masses.iter_mut().enumerate() {
            let v = self.origin + i as f64 * self.step;
            if v > upper + IDX_TOL * self.step {
                *m = 0.0;
            }
            if let Some(lo) = lower {
                if v < lo - IDX_TOL * self.step {
                    *m = 0.0;
                }
            }
        }
        // spill above the grid is certainly above `upper`; drop it. Low
        // spill survives only when no lower restriction could exclude it.
        let spill_low = if lower.is_some() { 0.0 } else { self.spill_low };
        LatticePmf {
            origin: self.origin,
            step: self.step,
            masses,
            spill_low,
            spill_high: 0.0,
            high_floor: f64::INFINITY,
            low_ceil: if spill_low > 0.0 {
                self.low_ceil
            } else {
                f64::NEG_INFINITY
            },
            smear: self.smear,
            dust: self.dust,
            noise_floor: self.noise_floor,
        }
    }

    /// Suffix table for repeated tail/window queries.
    pub fn tail_table(&self) -> TailTable {
        let mut suffix = vec![0.0; self.masses.len() + 1];
        let mut acc = Accumulator::default();
        for i in (0..self.masses.len()).rev() {
            acc.add(self.masses[i]);
            suffix[i] = acc.value();
        }
        TailTable {
            suffix,
            origin: self.origin,
            step: self.step,
            spill_low: self.spill_low,
            spill_high: self.spill_high,
            high_floor: self.high_floor,
            low_ceil: self.low_ceil,
            smear: self.smear,
            dust: self.dust,
        }
    }
}

/// Precomputed suffix sums plus spill metadata for O(1) queries.
pub struct TailTable {
    suffix: Vec<f64>,
    origin: f64,
    step: f64,
    spill_low: f64,
    spill_high: f64,
    high_floor: f64,
    low_ceil: f64,
    smear: f64,
    dust: f64,
}

impl TailTable {
    /// In-grid mass strictly above x.
    pub fn in_grid_above(&self, x: f64) -> f64 {
        let idxf = (x - self.origin) / self.step;
        let i = (idxf + IDX_TOL).floor() as i64 + 1;
        let i = i.clamp(0, (self.suffix.len() - 1) as i64) as usize;
        self.suffix[i]
    }

    /// P{S > x} with spill attribution and smear brackets.
    pub fn tail_prob(&self, x: f64, mode: SpillMode) -> Result<ProbBracket> {
        let attrib_high = if self.high_floor >= x {
            self.spill_high
        } else {
            0.0
        };
        let ambiguous_high = self.spill_high - attrib_high + self.dust;
        let ambiguous_low = if self.low_ceil > x { self.spill_low } else { 0.0 };
        let point = self.in_grid_above(x) + attrib_high;
        match mode {
            SpillMode::Strict => {
                let ambiguous = ambiguous_high + ambiguous_low;
                if ambiguous > 1e-12 * point.max(1e-300) {
                    return Err(Error::SpillViolation {
                        spill: ambiguous,
                        probed: point,
                    });
                }
                Ok(ProbBracket {
                    lower: point,
                    upper: point,
                    point,
                })
            }
            SpillMode::Bound => {
                let lower = self.in_grid_above(x + self.smear) + attrib_high;
                let upper = self.in_grid_above(x - self.smear)
                    + attrib_high
                    + ambiguous_high
                    + ambiguous_low;
                Ok(ProbBracket {
                    lower,
                    upper,
                    point,
                })
            }
        }
    }

    /// P{x < S <= x + t}; `t = inf` reduces to the tail.
    pub fn window_prob(&self, x: f64, t: f64, mode: SpillMode) -> Result<ProbBracket> {
        if t.is_infinite() {
            return self.tail_prob(x, mode);
        }
        let inside = |a: f64, b: f64| (self.in_grid_above(a) - self.in_grid_above(b)).max(0.0);
        let point = inside(x, x + t);
        // spill can only sit inside the window when its bound allows it
        let ambiguous_high = if self.high_floor <= x + t {
            self.spill_high + self.dust
        } else {
            self.dust
        };
        let ambiguous_low = if self.low_ceil > x { self.spill_low } else { 0.0 };
        match mode {
            SpillMode::Strict => {
                let ambiguous = ambiguous_high + ambiguous_low;
                if ambiguous > 1e-12 * point.max(1e-300) {
                    return Err(Error::SpillViolation {
                        spill: ambiguous,
                        probed: point,
                    });
                }
                Ok(ProbBracket {
                    lower: point,
                    upper: point,
                    point,
                })
            }
            SpillMode::Bound => {
                let lower = inside(x + self.smear, x + t - self.smear);
                let upper = inside(x - self.smear, x + t + self.smear)
                    + ambiguous_high
                    + ambiguous_low;
                Ok(ProbBracket {
                    lower,
                    upper,
                    point,
                })
            }
        }
    }
}

// ---------------------------------------------------------------------------
// discretize
// ---------------------------------------------------------------------------

/// Grid description for discretization.
#[derive(Clone, Copy, Debug)]
pub struct GridSpec {
    pub delta: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Projects a step distribution onto a uniform grid.
///
/// Continuous families: cell k holds the window mass of (lo+kδ, lo+(k+1)δ]
/// and is represented at the cell midpoint, so n-fold sums carry a
/// worst-case smear of nδ/2 with no systematic drift. Lattice families
/// place their atoms exactly (zero smear); atoms must sit on the grid.
pub fn discretize(d: &StepDistribution, grid: GridSpec) -> Result<LatticePmf> {
    let GridSpec { delta, lo, hi } = grid;
    if !(delta > 0.0) || !(hi > lo) {
        return Err(Error::Config {
            field: "lattice".into(),
            msg: format!("need delta > 0 and hi > lo (got delta={delta}, lo={lo}, hi={hi})"),
        });
    }
    let cells_f = ((hi - lo) / delta).round();
    let cells = cells_f as usize;
    if cells == 0 || cells > MAX_CELLS {
        return Err(Error::GridTooLarge {
            cells,
            limit: MAX_CELLS,
        });
    }
    if let Family::Lattice { atoms } = d.family() {
        let mut masses = vec![0.0; cells + 1];
        let mut spill_low = 0.0;
        let mut spill_high = 0.0;
        for (v_base, m) in atoms {
            let v = (v_base - d.shift()) / d.scale();
            if v < lo - IDX_TOL * delta {
                spill_low += m;
                continue;
            }
            if v > hi + IDX_TOL * delta {
                spill_high += m;
                continue;
            }
            let idxf = (v - lo) / delta;
            let idx = idxf.round();
            if (idxf - idx).abs() > 1e-6 {
                return Err(Error::Config {
                    field: "lattice.delta".into(),
                    msg: format!("atom at {v} does not sit on the grid (delta = {delta})"),
                });
            }
            masses[idx as usize] += m;
        }
        let mut pmf = LatticePmf::from_parts(lo, delta, masses);
        pmf.spill_low = spill_low;
        pmf.spill_high = spill_high;
        if spill_high > 0.0 {
            pmf.high_floor = hi;
        }
        if spill_low > 0.0 {
            pmf.low_ceil = lo;
        }
        return Ok(pmf);
    }
    let mut masses = Vec::with_capacity(cells);
    for k in 0..cells {
        let m = d.window_mass(lo + k as f64 * delta, delta);
        if m < -1e-14 {
            return Err(Error::NegativeMass { value: m });
        }
        masses.push(m.max(0.0));
    }
    let spill_high = d.tail(hi);
    // analytic left spill: exactly zero when the grid covers the support
    let spill_low = (1.0 - d.tail(lo)).max(0.0);
    Ok(LatticePmf {
        origin: lo + 0.5 * delta,
        step: delta,
        masses,
        spill_low,
        spill_high,
        high_floor: if spill_high > 0.0 { hi } else { f64::INFINITY },
        low_ceil: if spill_low > 0.0 { lo } else { f64::NEG_INFINITY },
        smear: 0.5 * delta,
        dust: 0.0,
        noise_floor: 0.0,
    })
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if forward {
            p.plan_fft_forward(len)
        } else {
            p.plan_fft_inverse(len)
        }
    })
}

/// Linear convolution of two mass vectors via FFT, computed on normalized
/// inputs so roundoff is relative to the product of the total masses.
fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let sa: f64 = crate::numeric::pairwise_sum(a);
    let sb: f64 = crate::numeric::pairwise_sum(b);
    if sa == 0.0 || sb == 0.0 {
        return vec![0.0; out_len];
    }
    let mut fa: Vec<Complex<f64>> = Vec::with_capacity(n);
    fa.extend(a.iter().map(|&x| Complex::new(x / sa, 0.0)));
    fa.resize(n, Complex::new(0.0, 0.0));
    let mut fb: Vec<Complex<f64>> = Vec::with_capacity(n);
    fb.extend(b.iter().map(|&x| Complex::new(x / sb, 0.0)));
    fb.resize(n, Complex::new(0.0, 0.0));
    let fwd = plan(n, true);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= *y;
    }
    plan(n, false).process(&mut fa);
    let scale = sa * sb / n as f64;
    fa.truncate(out_len);
    fa.iter().map(|c| c.re * scale).collect()
}

fn combine_spills(p: &LatticePmf, q: &LatticePmf) -> (f64, f64, f64, f64) {
    let (sp, sq) = (p.total_in_grid(), q.total_in_grid());
    let tq = sq + q.spill_low + q.spill_high;
    let high = p.spill_high * tq + q.spill_high * (sp + p.spill_low);
    let low = p.spill_low * (sq + q.spill_low) + q.spill_low * sp;
    // floors: minimum over the pair categories that feed the high bucket
    let mut floor = f64::INFINITY;
    if p.spill_high > 0.0 {
        if sq > 0.0 {
            floor = floor.min(p.high_floor + q.min_support().unwrap_or(0.0));
        }
        if q.spill_high > 0.0 {
            floor = floor.min(p.high_floor + q.high_floor);
        }
        if q.spill_low > 0.0 {
            floor = f64::NEG_INFINITY;
        }
    }
    if q.spill_high > 0.0 {
        if sp > 0.0 {
            floor = floor.min(q.high_floor + p.min_support().unwrap_or(0.0));
        }
        if p.spill_low > 0.0 {
            floor = f64::NEG_INFINITY;
        }
    }
    let mut ceil = f64::NEG_INFINITY;
    if p.spill_low > 0.0 {
        if sq > 0.0 {
            ceil = ceil.max(p.low_ceil + q.max_support().unwrap_or(0.0));
        }
        if q.spill_low > 0.0 {
            ceil = ceil.max(p.low_ceil + q.low_ceil);
        }
    }
    if q.spill_low > 0.0 && sp > 0.0 {
        ceil = ceil.max(q.low_ceil + p.max_support().unwrap_or(0.0));
    }
    (low, high, floor, ceil)
}

fn convolve_unchecked(p: &LatticePmf, q: &LatticePmf) -> Result<LatticePmf> {
    if p.is_empty() || q.is_empty() {
        let (low, high, floor, ceil) = combine_spills(p, q);
        return Ok(LatticePmf {
            origin: p.origin + q.origin,
            step: p.step,
            masses: Vec::new(),
            spill_low: low,
            spill_high: high,
            high_floor: floor,
            low_ceil: ceil,
            smear: p.smear + q.smear,
            dust: p.dust * q.total_all() + q.dust * p.total_all(),
            noise_floor: 0.0,
        });
    }
    let out_len = p.len() + q.len() - 1;
    if out_len > MAX_CELLS {
        return Err(Error::GridTooLarge {
            cells: out_len,
            limit: MAX_CELLS,
        });
    }
    let (sp, sq) = (p.total_in_grid(), q.total_in_grid());
    let scale = sp * sq;
    let fft_len = (p.len() + q.len() - 1).next_power_of_two() as f64;
    let noise_floor = f64::EPSILON * fft_len.log2() * scale
        + p.noise_floor * sq
        + q.noise_floor * sp;
    let mut masses = fft_convolve(&p.masses, &q.masses);
    for m in masses.iter_mut() {
        if *m < 0.0 {
            if *m < -NEG_CLIP * scale.max(1e-300) {
                return Err(Error::NegativeMass { value: *m });
            }
            *m = 0.0;
        }
    }
    let (low, high, floor, ceil) = combine_spills(p, q);
    Ok(LatticePmf {
        origin: p.origin + q.origin,
        step: p.step,
        masses,
        spill_low: low,
        spill_high: high,
        high_floor: floor,
        low_ceil: ceil,
        smear: p.smear + q.smear,
        dust: p.dust * q.total_all() + q.dust * p.total_all(),
        noise_floor,
    })
}

/// Exact lattice convolution. Requires equal steps and origins that sit on
/// a common lattice.
pub fn convolve(p: &LatticePmf, q: &LatticePmf) -> Result<LatticePmf> {
    if p.step != q.step {
        return Err(Error::MismatchedDelta(p.step, q.step));
    }
    let off = (p.origin - q.origin) / p.step;
    if (off - off.round()).abs() > 1e-6 {
        return Err(Error::IncompatibleOrigins(p.origin - q.origin));
    }
    convolve_unchecked(p, q)
}

/// n-fold convolution by binary exponentiation; the support grows in full.
pub fn nfold(p: &LatticePmf, n: u32) -> Result<LatticePmf> {
    assert!(n >= 1);
    let mut result: Option<LatticePmf> = None;
    let mut pow = p.clone();
    let mut k = n;
    loop {
        if k & 1 == 1 {
            result = Some(match result {
                None => pow.clone(),
                Some(r) => convolve_unchecked(&r, &pow)?,
            });
        }
        k >>= 1;
        if k == 0 {
            break;
        }
        pow = convolve_unchecked(&pow, &pow)?;
    }
    Ok(result.unwrap())
}

/// n-fold convolution truncated to [lo, hi] after every product.
pub fn nfold_within(p: &LatticePmf, n: u32, lo: f64, hi: f64) -> Result<LatticePmf> {
    assert!(n >= 1);
    let mut result: Option<LatticePmf> = None;
    let mut pow = p.truncate_to(lo, hi);
    let mut k = n;
    loop {
        if k & 1 == 1 {
            result = Some(match result {
                None => pow.clone(),
                Some(r) => convolve_unchecked(&r, &pow)?.truncate_to(lo, hi),
            });
        }
        k >>= 1;
        if k == 0 {
            break;
        }
        pow = convolve_unchecked(&pow, &pow)?.truncate_to(lo, hi);
    }
    Ok(result.unwrap())
}

/// n-fold law of a step restricted to `(-inf, h]` (or `[-h, h]`).
///
/// The removed mass is excluded, so the result is the sub-probability law
/// P{S_n in ., all steps restricted} with total P{step allowed}^n.
pub fn restricted_walk(p: &LatticePmf, h: f64, n: u32, two_sided: bool) -> Result<LatticePmf> {
    let lower = if two_sided { Some(-h) } else { None };
    let r = p.restrict(h, lower);
    if r.total() == 0.0 {
        // empty event: the zero sub-probability law
        return Ok(LatticePmf::from_parts(p.origin, p.step, vec![0.0]));
    }
    nfold(&r, n)
}

/// Split-series n-fold: numerically robust deep-tail version.
///
/// Writing p = body + tail with the split at `sigma`, the n-fold law is
/// sum_k C(n,k) body^(n-k) * tail^k. Each term is convolved at its own
/// scale, so far-tail cells come out with relative (not absolute) FFT
/// precision. The result equals `nfold_within(p, n, lo, hi)` up to
/// roundoff and spill bookkeeping.
pub fn nfold_split(
    p: &LatticePmf,
    n: u32,
    lo: f64,
    hi: f64,
    sigma: Option<f64>,
) -> Result<LatticePmf> {
    assert!(n >= 1);
    let base = p.truncate_to(lo, hi);
    let sigma = match sigma {
        Some(s) => s,
        None => match auto_split(&base, n) {
            Some(s) => s,
            None => return nfold_within(p, n, lo, hi),
        },
    };
    if n == 1 {
        return Ok(base);
    }
    // body keeps low spill; tail keeps high spill
    let mut body = base.clone();
    let mut tail = base.clone();
    let mut tail_mass = base.spill_high;
    for (i, m) in body.masses.iter_mut().enumerate() {
        if base.value(i) > sigma {
            tail_mass += *m;
            *m = 0.0;
        }
    }
    body.spill_high = 0.0;
    body.high_floor = f64::INFINITY;
    for (i, m) in tail.masses.iter_mut().enumerate() {
        if base.value(i) <= sigma {
            *m = 0.0;
        }
    }
    tail.spill_low = 0.0;
    tail.low_ceil = f64::NEG_INFINITY;
    if tail_mass == 0.0 {
        return nfold_within(p, n, lo, hi);
    }

    // series depth: C(n,k) tail_mass^k below the cutoff ends the sum
    let mut k_max = 1u32;
    let mut coeff = n as f64 * tail_mass;
    while k_max < n && coeff > 1e-21 {
        k_max += 1;
        coeff *= (n - k_max + 1) as f64 / k_max as f64 * tail_mass;
    }

    // body powers live on a private window chosen so that the restricted
    // walk essentially never leaves it (exponential decay at scale sigma)
    let body_mean = if body.total_in_grid() > 0.0 {
        body.mean_in_grid()
    } else {
        0.0
    };
    let span = sigma - body.min_support().unwrap_or(lo);
    let body_hi = (n as f64 * body_mean.max(0.0) + 64.0 * span.max(4.0 * base.step)).min(hi);

    let mut terms: Vec<(f64, LatticePmf)> = Vec::new();
    let m0 = n - k_max;
    let mut body_pow = if m0 >= 1 {
        Some(nfold_body(&body, m0, lo, body_hi)?)
    } else {
        None
    };
    // binomial coefficients walked downward from k_max
    for k in (0..=k_max).rev() {
        let mut c = 1.0f64;
        for j in 0..k {
            c *= (n - j) as f64 / (j + 1) as f64;
        }
        let term = match (&body_pow, k) {
            (Some(bp), 0) => bp.clone(),
            (Some(bp), _) => {
                let tp = tail_power(&tail, k, lo, hi)?;
                convolve_unchecked(bp, &tp)?.truncate_to(lo, hi)
            }
            (None, _) => tail_power(&tail, k, lo, hi)?,
        };
        terms.push((c, term));
        if k > 0 {
            let power = n - k + 1;
            body_pow = match body_pow {
                Some(bp) => {
                    let next = convolve_unchecked(&bp, &body)?.truncate_to(lo, body_hi);
                    Some(cap_body_spills(next, &body, power, lo, body_hi, 2.0))
                }
                None => Some(body.truncate_to(lo, body_hi)),
            };
        }
    }

    accumulate_terms(&terms, lo, hi, p.step, n as f64 * base.smear)
}

/// Exponential-moment bound on P{S_m > level} for m independent copies of
/// the (sub-probability) step law `p`: min over a theta grid of
/// exp(m log phi(theta) - theta level). Exact for the lattice law.
fn chernoff_tail_bound(p: &LatticePmf, m: u32, level: f64) -> f64 {
    let cells: Vec<(f64, f64)> = p
        .masses
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(i, &v)| (p.value(i), v))
        .collect();
    if cells.is_empty() {
        return 0.0;
    }
    let top = cells.last().unwrap().0;
    if (m as f64) * top <= level {
        return 0.0;
    }
    let scale = top.abs().max(p.step);
    let mut best: f64 = 1.0;
    for k in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
        let theta = k / scale;
        let mx = cells
            .iter()
            .map(|(v, w)| theta * v + w.ln())
            .fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = cells
            .iter()
            .map(|(v, w)| (theta * v + w.ln() - mx).exp())
            .sum();
        let log_phi = mx + s.ln();
        best = best.min((m as f64 * log_phi - theta * level).exp());
    }
    best
}

/// Mirrored bound on P{S_m < level}.
fn chernoff_low_bound(p: &LatticePmf, m: u32, level: f64) -> f64 {
    let mirrored = LatticePmf {
        origin: -(p.origin + (p.len().saturating_sub(1)) as f64 * p.step),
        step: p.step,
        masses: p.masses.iter().rev().copied().collect(),
        spill_low: 0.0,
        spill_high: 0.0,
        high_floor: f64::INFINITY,
        low_ceil: f64::NEG_INFINITY,
        smear: 0.0,
        dust: 0.0,
        noise_floor: 0.0,
    };
    chernoff_tail_bound(&mirrored, m, -level)
}

/// n-fold of a truncation-level-bounded step law on a private window.
///
/// Truncation spill here is FFT noise, not mass: the true escape
/// probability is certified by the exponential bound and the measured
/// spill is replaced by that certificate (as floorless dust) whenever the
/// certificate is smaller.
fn cap_body_spills(
    mut pmf: LatticePmf,
    body: &LatticePmf,
    power: u32,
    lo: f64,
    hi: f64,
    stage: f64,
) -> LatticePmf {
    if pmf.spill_high > 0.0 {
        let bound = stage * chernoff_tail_bound(body, power, hi);
        if bound < pmf.spill_high {
            pmf.dust += bound;
            pmf.spill_high = 0.0;
            pmf.high_floor = f64::INFINITY;
        }
    }
    if pmf.spill_low > 0.0 {
        let bound = stage * chernoff_low_bound(body, power, lo);
        if bound < pmf.spill_low {
            pmf.dust += bound;
            pmf.spill_low = 0.0;
            pmf.low_ceil = f64::NEG_INFINITY;
        }
    }
    pmf
}

fn nfold_body(body: &LatticePmf, n: u32, lo: f64, hi: f64) -> Result<LatticePmf> {
    assert!(n >= 1);
    let mut result: Option<(LatticePmf, u32)> = None;
    let mut pow = cap_body_spills(body.truncate_to(lo, hi), body, 1, lo, hi, 1.0);
    let mut pow_exp = 1u32;
    let mut k = n;
    let mut stage = 1.0;
    loop {
        if k & 1 == 1 {
            result = Some(match result {
                None => (pow.clone(), pow_exp),
                Some((r, e)) => {
                    stage += 1.0;
                    let combined = convolve_unchecked(&r, &pow)?.truncate_to(lo, hi);
                    (
                        cap_body_spills(combined, body, e + pow_exp, lo, hi, stage),
                        e + pow_exp,
                    )
                }
            });
        }
        k >>= 1;
        if k == 0 {
            break;
        }
        stage += 1.0;
        let squared = convolve_unchecked(&pow, &pow)?.truncate_to(lo, hi);
        pow_exp *= 2;
        pow = cap_body_spills(squared, body, pow_exp, lo, hi, stage);
    }
    Ok(result.unwrap().0)
}

fn tail_power(tail: &LatticePmf, k: u32, lo: f64, hi: f64) -> Result<LatticePmf> {
    let mut out = tail.truncate_to(lo, hi);
    for _ in 1..k {
        out = convolve_unchecked(&out, tail)?.truncate_to(lo, hi);
    }
    Ok(out)
}

fn accumulate_terms(
    terms: &[(f64, LatticePmf)],
    lo: f64,
    hi: f64,
    step: f64,
    smear: f64,
) -> Result<LatticePmf> {
    // all terms sit on one global lattice; anchor the master grid on the
    // term with the lowest origin
    let origin = terms
        .iter()
        .map(|(_, t)| t.origin)
        .fold(f64::INFINITY, f64::min);
    let cells = (((hi - lo) / step).round() as usize) + 2;
    let mut masses = vec![0.0; cells];
    let mut spill_low = 0.0;
    let mut spill_high = 0.0;
    let mut dust = 0.0;
    let mut noise_floor = 0.0f64;
    let mut floor = f64::INFINITY;
    let mut ceil = f64::NEG_INFINITY;
    let mut max_idx = 0usize;
    for (c, t) in terms {
        let off_f = (t.origin - origin) / step;
        let off = off_f.round() as usize;
        debug_assert!((off_f - off as f64).abs() < 1e-6);
        for (i, &m) in t.masses.iter().enumerate() {
            let j = i + off;
            if j >= masses.len() {
                masses.resize(j + 1, 0.0);
            }
            masses[j] += c * m;
            max_idx = max_idx.max(j);
        }
        spill_low += c * t.spill_low;
        spill_high += c * t.spill_high;
        dust += c * t.dust;
        noise_floor = noise_floor.max(c * t.noise_floor);
        if t.spill_high > 0.0 {
            floor = floor.min(t.high_floor);
        }
        if t.spill_low > 0.0 {
            ceil = ceil.max(t.low_ceil);
        }
    }
    masses.truncate(max_idx + 1);
    Ok(LatticePmf {
        origin,
        step,
        masses,
        spill_low,
        spill_high,
        high_floor: floor,
        low_ceil: ceil,
        smear,
        dust,
        noise_floor,
    })
}

/// Smallest grid value with n * (mass above) <= 1/4, so the split series
/// converges fast; None when the whole law already qualifies.
fn auto_split(p: &LatticePmf, n: u32) -> Option<f64> {
    let table = p.tail_table();
    let target = 0.25 / n as f64;
    if p.spill_high + p.masses.last().copied().unwrap_or(0.0) > target {
        // scan from the top for the first admissible split
        let mut acc = p.spill_high;
        let mut idx = p.len();
        for i in (0..p.len()).rev() {
            if acc + p.masses[i] > target {
                idx = i + 1;
                break;
            }
            acc += p.masses[i];
            idx = i;
        }
        if idx == 0 || idx >= p.len() {
            return None;
        }
        let split = p.value(idx - 1);
        // splitting below the bulk is useless
        if table.in_grid_above(split) > 0.9 {
            return None;
        }
        Some(split)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// two-large-jumps ratios
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatioVariant {
    /// All k steps above the truncation level.
    Epsilon,
    /// Steps 2..k below -K (step 1 unrestricted).
    Eta,
}

/// sup over grid x >= h of P{S_k in x+Delta, restricted}/F(x+Delta).
///
/// Both numerator and denominator are evaluated on the same lattice law
/// (top spill counts toward every global tail), so the bound
/// epsilon_k <= epsilon_2^(k-1) holds exactly for the discretized
/// distribution. The eta variant satisfies it exactly when the grid holds
/// the full support; on truncated grids it is a finite-grid diagnostic.
pub fn epsilon_eta(
    p: &LatticePmf,
    h: f64,
    k_level: f64,
    k: u32,
    t_window: f64,
    variant: RatioVariant,
) -> Result<f64> {
    assert!(k >= 2);
    let hi = p.value(p.len() - 1);
    let num = match variant {
        RatioVariant::Epsilon => {
            let mut part = p.clone();
            for (i, m) in part.masses.iter_mut().enumerate() {
                if p.value(i) <= h + IDX_TOL * p.step {
                    *m = 0.0;
                }
            }
            part.spill_low = 0.0;
            part.low_ceil = f64::NEG_INFINITY;
            if part.total() == 0.0 {
                // no step can exceed the level: empty event
                return Ok(0.0);
            }
            let mut out = part.clone();
            for _ in 1..k {
                out = convolve_unchecked(&out, &part)?.truncate_to(p.origin, hi);
            }
            out
        }
        RatioVariant::Eta => {
            let mut neg = p.clone();
            for (i, m) in neg.masses.iter_mut().enumerate() {
                if p.value(i) >= -k_level - IDX_TOL * p.step {
                    *m = 0.0;
                }
            }
            neg.spill_high = 0.0;
            neg.high_floor = f64::INFINITY;
            if neg.total() == 0.0 {
                return Ok(0.0);
            }
            let mut out = p.clone();
            for _ in 1..k {
                out = convolve_unchecked(&out, &neg)?.truncate_to(2.0 * p.origin - hi, hi);
            }
            out
        }
    };
    let num = {
        // convolution junk below the noise floor is not mass
        let mut n = num;
        let floor = 8.0 * n.noise_floor;
        for m in n.masses.iter_mut() {
            if *m < floor {
                *m = 0.0;
            }
        }
        n
    };
    let num_table = num.tail_table();
    let den_table = p.tail_table();
    let mut sup: f64 = f64::NEG_INFINITY;
    let mut found = false;
    let start = ((h - p.origin) / p.step - IDX_TOL).ceil().max(0.0) as usize;
    for i in start..p.len() {
        let x = p.value(i);
        let (num_v, den_v) = if t_window.is_infinite() {
            // spilled numerator mass counts only when provably above x
            let num_spill = if num.high_floor >= x { num.spill_high } else { 0.0 };
            (
                num_table.in_grid_above(x) + num_spill,
                den_table.in_grid_above(x) + p.spill_high,
            )
        } else {
            if x + t_window > hi + IDX_TOL * p.step {
                break;
            }
            (
                num_table.in_grid_above(x) - num_table.in_grid_above(x + t_window),
                den_table.in_grid_above(x) - den_table.in_grid_above(x + t_window),
            )
        };
        if den_v > 0.0 {
            found = true;
            sup = sup.max(num_v / den_v);
        }
    }
    if !found {
        return Err(Error::EmptyRange);
    }
    Ok(sup.max(0.0))
}

// ---------------------------------------------------------------------------
// saddlepoint deep-tail evaluation
// ---------------------------------------------------------------------------

/// log P{S_n > x} for the walk with step law `p`, exact to roughly 1e-10
/// relative even when the probability is far below FFT noise.
///
/// Uses the exponential change of measure at the saddlepoint of x/n; the
/// tilted law is convolved by FFT at unit scale and reweighted cell by
/// cell. `p` must have no spill.
pub fn log_tail_saddlepoint(p: &LatticePmf, n: u32, x: f64) -> Result<f64> {
    log_event_saddlepoint(p, n, x, f64::INFINITY)
}

/// log P{S_n in (x, x+T]}; `T = inf` gives the tail.
pub fn log_event_saddlepoint(p: &LatticePmf, n: u32, x: f64, t_window: f64) -> Result<f64> {
    if p.spill_low > 0.0 || p.spill_high > 0.0 {
        return Err(Error::SpillViolation {
            spill: p.spill_low + p.spill_high,
            probed: 0.0,
        });
    }
    let vmax = match p.max_support() {
        Some(v) => v,
        None => return Ok(f64::NEG_INFINITY),
    };
    let vmin = p.min_support().unwrap();
    let nf = n as f64;
    if x >= nf * vmax {
        return Ok(f64::NEG_INFINITY);
    }
    // log-MGF of the (sub-probability) step law
    let cells: Vec<(f64, f64)> = p
        .masses
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > 0.0)
        .map(|(i, &m)| (p.value(i), m))
        .collect();
    let psi = |theta: f64| -> (f64, f64, f64) {
        // returns (psi, psi', psi'') via a stabilized log-sum-exp
        let mx = cells
            .iter()
            .map(|(v, m)| theta * v + m.ln())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (v, m) in &cells {
            let w = (theta * v + m.ln() - mx).exp();
            s0 += w;
            s1 += w * v;
            s2 += w * v * v;
        }
        let mean = s1 / s0;
        (mx + s0.ln(), mean, s2 / s0 - mean * mean)
    };
    let target = x / nf;
    let mut theta = 0.0;
    if psi(0.0).1 < target {
        // Newton with bisection bracket
        let mut hi = 1.0 / p.step.max(1e-12);
        let mut lo = 0.0;
        for _ in 0..200 {
            if psi(hi).1 >= target {
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        theta = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (_, d1, d2) = psi(theta);
            if d1 > target {
                hi = theta;
            } else {
                lo = theta;
            }
            let step = if d2 > 0.0 { (target - d1) / d2 } else { 0.0 };
            let next = theta + step;
            theta = if next > lo && next < hi {
                next
            } else {
                0.5 * (lo + hi)
            };
            if (hi - lo) < 1e-12 * theta.abs().max(1e-12) {
                break;
            }
        }
    }
    let (psi0, mean_t, var_t) = psi(theta);
    // tilted step pmf on the original lattice
    let mut q = vec![0.0; p.len()];
    for (i, &m) in p.masses.iter().enumerate() {
        if m > 0.0 {
            q[i] = (theta * p.value(i) + m.ln() - psi0).exp();
        }
    }
    let q_pmf = LatticePmf::from_parts(p.origin, p.step, q);
    let sd = (nf * var_t).sqrt().max(p.step);
    let reach = if theta > 1e-9 {
        (60.0 / theta).max(8.0 * sd)
    } else {
        nf * vmax - x + p.step
    };
    // partial sums of k <= n steps range over [min(v_min, n v_min), ...],
    // so the running window may never cut above that from below; above,
    // spilled mass can fall back by at most n |v_min| and the escape
    // guard accounts for it
    let win_lo = vmin.min(nf * vmin) - p.step;
    let slack_down = nf * (-vmin.min(0.0));
    let win_hi = if t_window.is_infinite() {
        (x + reach + 60.0 * sd + slack_down).min(nf * vmax + p.step)
    } else {
        (x + t_window + slack_down + p.step).min(nf * vmax + p.step)
    };
    let folded = nfold_within(&q_pmf, n, win_lo, win_hi)?;
    let _ = mean_t;
    // untilt: P = e^{n psi} sum_{v in event} e^{-theta v} q_n(v)
    let mut acc = Accumulator::default();
    for (i, &m) in folded.masses.iter().enumerate() {
        let v = folded.value(i);
        if v > x + IDX_TOL * p.step
            && (t_window.is_infinite() || v <= x + t_window + IDX_TOL * p.step)
        {
            acc.add((-theta * (v - x)).exp() * m);
        }
    }
    let body = acc.value();
    // truncation controls: escaped tilted mass must be negligible
    let escape = folded.spill_low + folded.spill_high * (-theta * (win_hi - x)).exp().min(1.0);
    if body > 0.0 && escape > 1e-9 * body {
        return Err(Error::SpillViolation {
            spill: escape,
            probed: body,
        });
    }
    if body <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(nf * psi0 - theta * x + body.ln())
}

// ---------------------------------------------------------------------------
// binary cache
// ---------------------------------------------------------------------------

const CACHE_MAGIC: [u8; 4] = *b"BJLC";
const CACHE_VERSION: u32 = 1;

/// Writes an n-fold law to a versioned little-endian binary file.
pub fn save_cache(path: &Path, key: u64, pmf: &LatticePmf) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&key.to_le_bytes())?;
    w.write_all(&pmf.step.to_le_bytes())?;
    w.write_all(&pmf.origin.to_le_bytes())?;
    w.write_all(&(pmf.masses.len() as u64).to_le_bytes())?;
    for m in &pmf.masses {
        w.write_all(&m.to_le_bytes())?;
    }
    for extra in [
        pmf.spill_low,
        pmf.spill_high,
        pmf.high_floor,
        pmf.low_ceil,
        pmf.smear,
        pmf.dust,
        pmf.noise_floor,
    ] {
        w.write_all(&extra.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a cached law back; `None` when the key does not match.
pub fn load_cache(path: &Path, key: u64) -> Result<Option<LatticePmf>> {
    let mut r = std::io::BufReader::new(match std::fs::File::open(path) {
        Ok(f) => f,
        Err(_) => return Ok(None),
    });
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != CACHE_MAGIC {
        return Err(Error::CacheFormat("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != CACHE_VERSION {
        return Err(Error::CacheFormat("unsupported version".into()));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    if u64::from_le_bytes(b8) != key {
        return Ok(None);
    }
    fn next_f64<R: Read>(r: &mut R) -> Result<f64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    let step = next_f64(&mut r)?;
    let origin = next_f64(&mut r)?;
    let len = {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        u64::from_le_bytes(b) as usize
    };
    if len > MAX_CELLS {
        return Err(Error::CacheFormat("length exceeds cell limit".into()));
    }
    let mut masses = Vec::with_capacity(len);
    for _ in 0..len {
        masses.push(next_f64(&mut r)?);
    }
    let mut pmf = LatticePmf::from_parts(origin, step, masses);
    pmf.spill_low = next_f64(&mut r)?;
    pmf.spill_high = next_f64(&mut r)?;
    pmf.high_floor = next_f64(&mut r)?;
    pmf.low_ceil = next_f64(&mut r)?;
    pmf.smear = next_f64(&mut r)?;
    pmf.dust = next_f64(&mut r)?;
    pmf.noise_floor = next_f64(&mut r)?;
    Ok(Some(pmf))
}
