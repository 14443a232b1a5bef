//! Python bindings: step distributions, the lattice oracle, boundary
//! sequences and the Monte Carlo estimators.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use bigjump::dist::{self, StandardizeMode, StepDistribution};
use bigjump::lattice::{self, GridSpec, LatticePmf, RatioVariant, SpillMode};
use bigjump::mc;
use bigjump::seqs::{self, BoundaryOptions, Provenance};

fn err(e: bigjump::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(mode: &str) -> PyResult<StandardizeMode> {
    Ok(match mode {
        "none" => StandardizeMode::None,
        "full" => StandardizeMode::Full,
        "center" => StandardizeMode::CenterOnly,
        other => return Err(PyValueError::new_err(format!("unknown mode `{other}`"))),
    })
}

fn parse_spill(mode: &str) -> PyResult<SpillMode> {
    Ok(match mode {
        "strict" => SpillMode::Strict,
        "bound" => SpillMode::Bound,
        other => return Err(PyValueError::new_err(format!("unknown spill mode `{other}`"))),
    })
}

/// A step-size distribution with exact tails and deterministic sampling.
#[pyclass(name = "StepDistribution", skip_from_py_object)]
#[derive(Clone)]
struct PyStepDistribution {
    inner: StepDistribution,
}

#[pymethods]
impl PyStepDistribution {
    #[new]
    #[pyo3(signature = (name, params=None))]
    fn new(name: &str, params: Option<BTreeMap<String, f64>>) -> PyResult<Self> {
        let inner = dist::make_family(name, &params.unwrap_or_default()).map_err(err)?;
        Ok(PyStepDistribution { inner })
    }

    /// Explicit lattice family from (value, mass) pairs.
    #[staticmethod]
    fn lattice(atoms: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(PyStepDistribution {
            inner: StepDistribution::lattice(atoms).map_err(err)?,
        })
    }

    fn tail(&self, x: f64) -> f64 {
        self.inner.tail(x)
    }

    #[pyo3(signature = (x, t=f64::INFINITY))]
    fn window_mass(&self, x: f64, t: f64) -> f64 {
        self.inner.window_mass(x, t)
    }

    fn two_sided_tail(&self, x: f64) -> f64 {
        self.inner.two_sided_tail(x)
    }

    fn truncated_moments(&self, x: f64) -> (f64, f64) {
        self.inner.truncated_moments(x)
    }

    fn q_function(&self, x: f64) -> f64 {
        self.inner.q_function(x)
    }

    fn mean(&self) -> Option<f64> {
        self.inner.mean()
    }

    fn variance(&self) -> Option<f64> {
        self.inner.variance()
    }

    #[pyo3(signature = (mode="full"))]
    fn standardize(&self, mode: &str) -> PyResult<Self> {
        Ok(PyStepDistribution {
            inner: self.inner.standardize(parse_mode(mode)?).map_err(err)?,
        })
    }

    fn sample(&self, seed: u64, count: usize) -> Vec<f64> {
        self.inner.sample(seed, count)
    }

    fn quantile_from_tail(&self, t: f64) -> f64 {
        self.inner.quantile_from_tail(t)
    }

    fn support(&self) -> (f64, f64) {
        self.inner.support()
    }

    fn stable_hash(&self) -> u64 {
        self.inner.stable_hash()
    }

    /// Normalizer and tilted atom masses: returns (phi, tail_fn-capable object).
    fn tilt_truncate(&self, h: f64) -> PyResult<PyTilted> {
        Ok(PyTilted {
            inner: std::sync::Arc::new(self.inner.tilt_truncate(h).map_err(err)?),
        })
    }

    fn __repr__(&self) -> String {
        format!("StepDistribution({:?})", self.inner.family())
    }
}

/// Exponentially tilted, truncated step law.
#[pyclass(name = "TiltedTruncated", skip_from_py_object)]
#[derive(Clone)]
struct PyTilted {
    inner: std::sync::Arc<dist::TiltedTruncated>,
}

#[pymethods]
impl PyTilted {
    fn phi(&self) -> f64 {
        self.inner.phi()
    }

    fn log_phi(&self) -> f64 {
        self.inner.log_phi()
    }

    fn tail(&self, y: f64) -> f64 {
        self.inner.tail(y)
    }

    fn atom(&self, y: f64) -> f64 {
        self.inner.atom(y)
    }

    fn sample(&self, seed: u64, count: usize) -> Vec<f64> {
        let rng = bigjump::CounterRng::new(seed);
        (0..count)
            .map(|i| self.inner.sample_at(&rng, 0, i as u64))
            .collect()
    }
}

/// Sub-probability mass vector on a uniform grid.
#[pyclass(name = "LatticePmf", skip_from_py_object)]
#[derive(Clone)]
struct PyLatticePmf {
    inner: LatticePmf,
}

#[pymethods]
impl PyLatticePmf {
    #[getter]
    fn origin(&self) -> f64 {
        self.inner.origin()
    }

    #[getter]
    fn step(&self) -> f64 {
        self.inner.step()
    }

    fn masses(&self) -> Vec<f64> {
        self.inner.masses().to_vec()
    }

    fn total(&self) -> f64 {
        self.inner.total()
    }

    fn spill_low(&self) -> f64 {
        self.inner.spill_low()
    }

    fn spill_high(&self) -> f64 {
        self.inner.spill_high()
    }

    fn mean(&self) -> f64 {
        self.inner.mean_in_grid()
    }

    fn variance(&self) -> f64 {
        self.inner.variance_in_grid()
    }

    /// (lower, upper, point) brackets for P{S > x}.
    #[pyo3(signature = (x, mode="strict"))]
    fn tail_prob(&self, x: f64, mode: &str) -> PyResult<(f64, f64, f64)> {
        let b = self
            .inner
            .tail_table()
            .tail_prob(x, parse_spill(mode)?)
            .map_err(err)?;
        Ok((b.lower, b.upper, b.point))
    }

    /// (lower, upper, point) brackets for P{x < S <= x + t}.
    #[pyo3(signature = (x, t, mode="strict"))]
    fn window_prob(&self, x: f64, t: f64, mode: &str) -> PyResult<(f64, f64, f64)> {
        let b = self
            .inner
            .tail_table()
            .window_prob(x, t, parse_spill(mode)?)
            .map_err(err)?;
        Ok((b.lower, b.upper, b.point))
    }

    fn truncate_to(&self, lo: f64, hi: f64) -> Self {
        PyLatticePmf {
            inner: self.inner.truncate_to(lo, hi),
        }
    }

    #[pyo3(signature = (upper, lower=None))]
    fn restrict(&self, upper: f64, lower: Option<f64>) -> Self {
        PyLatticePmf {
            inner: self.inner.restrict(upper, lower),
        }
    }
}

#[pyfunction]
fn discretize(d: &PyStepDistribution, delta: f64, lo: f64, hi: f64) -> PyResult<PyLatticePmf> {
    Ok(PyLatticePmf {
        inner: lattice::discretize(&d.inner, GridSpec { delta, lo, hi }).map_err(err)?,
    })
}

#[pyfunction]
fn convolve(p: &PyLatticePmf, q: &PyLatticePmf) -> PyResult<PyLatticePmf> {
    Ok(PyLatticePmf {
        inner: lattice::convolve(&p.inner, &q.inner).map_err(err)?,
    })
}

#[pyfunction]
fn nfold(p: &PyLatticePmf, n: u32) -> PyResult<PyLatticePmf> {
    Ok(PyLatticePmf {
        inner: lattice::nfold(&p.inner, n).map_err(err)?,
    })
}

/// Numerically robust n-fold restricted to [lo, hi].
#[pyfunction]
#[pyo3(signature = (p, n, lo, hi, sigma=None))]
fn nfold_split(
    p: &PyLatticePmf,
    n: u32,
    lo: f64,
    hi: f64,
    sigma: Option<f64>,
) -> PyResult<PyLatticePmf> {
    Ok(PyLatticePmf {
        inner: lattice::nfold_split(&p.inner, n, lo, hi, sigma).map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (p, h, n, two_sided=false))]
fn restricted_walk(p: &PyLatticePmf, h: f64, n: u32, two_sided: bool) -> PyResult<PyLatticePmf> {
    Ok(PyLatticePmf {
        inner: lattice::restricted_walk(&p.inner, h, n, two_sided).map_err(err)?,
    })
}

/// log P{S_n > x} for the restricted step law, exact far below FFT noise.
#[pyfunction]
fn log_tail_saddlepoint(p: &PyLatticePmf, n: u32, x: f64) -> PyResult<f64> {
    lattice::log_tail_saddlepoint(&p.inner, n, x).map_err(err)
}

/// sup_x of the k-step restricted ratio (epsilon/eta of the two-jump bound).
#[pyfunction]
#[pyo3(signature = (p, h, k, t=f64::INFINITY, variant="epsilon", k_level=0.0))]
fn epsilon_eta(
    p: &PyLatticePmf,
    h: f64,
    k: u32,
    t: f64,
    variant: &str,
    k_level: f64,
) -> PyResult<f64> {
    let v = match variant {
        "epsilon" => RatioVariant::Epsilon,
        "eta" => RatioVariant::Eta,
        other => return Err(PyValueError::new_err(format!("unknown variant `{other}`"))),
    };
    lattice::epsilon_eta(&p.inner, h, k_level, k, t, v).map_err(err)
}

fn options_from(kwargs: Option<BTreeMap<String, f64>>) -> BoundaryOptions {
    let mut opts = BoundaryOptions::default();
    if let Some(map) = kwargs {
        for (k, v) in map {
            match k.as_str() {
                "t" => opts.t = v,
                "epsilon" => opts.epsilon = v,
                "gamma" => opts.gamma = v,
                "tol_i" => opts.tol_i = v,
                "multiplier" => opts.multiplier = v,
                "kappa" => opts.kappa = v,
                "a" => opts.a_lin = v,
                "window" => opts.t_window = v,
                _ => {}
            }
        }
    }
    opts
}

/// Boundary tuple (b_n, a_n, h_n, I_n, J_n, x_n) as a JSON string.
#[pyfunction]
#[pyo3(signature = (d, n, provenance, options=None))]
fn boundary(
    d: &PyStepDistribution,
    n: u32,
    provenance: &str,
    options: Option<BTreeMap<String, f64>>,
) -> PyResult<String> {
    let prov = Provenance::parse(provenance).map_err(err)?;
    let b = seqs::boundary(&d.inner, n, prov, &options_from(options)).map_err(err)?;
    Ok(b.to_json())
}

#[pyfunction]
fn natural_scale(d: &PyStepDistribution, n: u32) -> PyResult<f64> {
    seqs::natural_scale(&d.inner, n).map_err(err)
}

#[pyfunction]
fn a_n(d: &PyStepDistribution, n: u32) -> PyResult<f64> {
    seqs::a_n(&d.inner, n).map_err(err)
}

#[pyfunction]
fn heuristic_j(d: &PyStepDistribution, n: u32) -> PyResult<f64> {
    seqs::heuristic_j(&d.inner, n).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (d, b, tol, t=f64::INFINITY))]
fn insensitivity_boundary(d: &PyStepDistribution, b: f64, tol: f64, t: f64) -> PyResult<f64> {
    seqs::insensitivity_boundary(&d.inner, b, tol, t).map_err(err)
}

/// (estimate, std_error) of the plain frequency estimator.
#[pyfunction]
#[pyo3(signature = (d, n, x, samples, seed, t=f64::INFINITY))]
fn plain_tail(
    d: &PyStepDistribution,
    n: u32,
    x: f64,
    samples: u64,
    seed: u64,
    t: f64,
) -> PyResult<(f64, f64)> {
    let r = mc::plain_tail(&d.inner, n, x, t, samples, seed).map_err(err)?;
    Ok((r.estimate, r.std_error))
}

/// (estimate, std_error) of the conditional single-big-jump estimator.
#[pyfunction]
fn big_jump_cmc(
    d: &PyStepDistribution,
    n: u32,
    x: f64,
    samples: u64,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let r = mc::big_jump_cmc(&d.inner, n, x, samples, seed).map_err(err)?;
    Ok((r.estimate, r.std_error))
}

/// (estimate, std_error) of the tilted restricted-walk estimator.
#[pyfunction]
#[pyo3(signature = (d, h, n, x, samples, seed, t=f64::INFINITY))]
fn tilted_restricted(
    d: &PyStepDistribution,
    h: f64,
    n: u32,
    x: f64,
    samples: u64,
    seed: u64,
    t: f64,
) -> PyResult<(f64, f64)> {
    let r = mc::tilted_restricted(&d.inner, h, n, x, t, samples, seed).map_err(err)?;
    Ok((r.estimate, r.std_error))
}

/// Runs a verification sweep from config text; returns (csv, json).
#[pyfunction]
fn run_experiment(config: &str) -> PyResult<(String, String)> {
    let cfg = bigjump::cli::ExperimentConfig::parse(config).map_err(err)?;
    let report = bigjump::cli::run_experiment(&cfg).map_err(err)?;
    Ok((report.to_csv(), report.to_json()))
}

/// Family diagnostics as verdict lines.
#[pyfunction]
#[pyo3(signature = (d, t=f64::INFINITY))]
fn diagnose(d: &PyStepDistribution, t: f64) -> PyResult<Vec<String>> {
    Ok(bigjump::cli::diagnose(&d.inner, t).map_err(err)?.verdicts)
}

#[pymodule]
fn bigjump_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStepDistribution>()?;
    m.add_class::<PyTilted>()?;
    m.add_class::<PyLatticePmf>()?;
    m.add_function(wrap_pyfunction!(discretize, m)?)?;
    m.add_function(wrap_pyfunction!(convolve, m)?)?;
    m.add_function(wrap_pyfunction!(nfold, m)?)?;
    m.add_function(wrap_pyfunction!(nfold_split, m)?)?;
    m.add_function(wrap_pyfunction!(restricted_walk, m)?)?;
    m.add_function(wrap_pyfunction!(log_tail_saddlepoint, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_eta, m)?)?;
    m.add_function(wrap_pyfunction!(boundary, m)?)?;
    m.add_function(wrap_pyfunction!(natural_scale, m)?)?;
    m.add_function(wrap_pyfunction!(a_n, m)?)?;
    m.add_function(wrap_pyfunction!(heuristic_j, m)?)?;
    m.add_function(wrap_pyfunction!(insensitivity_boundary, m)?)?;
    m.add_function(wrap_pyfunction!(plain_tail, m)?)?;
    m.add_function(wrap_pyfunction!(big_jump_cmc, m)?)?;
    m.add_function(wrap_pyfunction!(tilted_restricted, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(diagnose, m)?)?;
    Ok(())
}
