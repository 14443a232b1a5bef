//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown family `{0}`")]
    UnknownFamily(String),

    #[error("parameter `{param}` out of range for {family}: {reason}")]
    ParamOutOfRange {
        family: &'static str,
        param: &'static str,
        reason: String,
    },

    #[error("regime not identifiable: {0}")]
    RegimeMismatch(String),

    #[error("option inequality violated: {0}")]
    OptionViolation(String),

    #[error("quadrature did not converge (achieved relative error {achieved:.3e})")]
    QuadratureNonConvergence { achieved: f64 },

    #[error("no root found: {0}")]
    NoRoot(String),

    #[error("defect never drops below tolerance (unbounded boundary)")]
    UnboundedBoundary,

    #[error("fixed point did not converge after {iters} iterations")]
    NonConvergence { iters: usize },

    #[error("unit variance requested on an infinite-variance family")]
    InfiniteVariance,

    #[error("grid too large: {cells} cells exceeds limit {limit}")]
    GridTooLarge { cells: usize, limit: usize },

    #[error("mismatched grid steps: {0} vs {1}")]
    MismatchedDelta(f64, f64),

    #[error("incompatible grid origins (offset {0} is not a multiple of the step)")]
    IncompatibleOrigins(f64),

    #[error("negative convolution cell {value:.3e} below the clip threshold")]
    NegativeMass { value: f64 },

    #[error("spill {spill:.3e} exceeds strict-mode limit relative to probed value {probed:.3e}")]
    SpillViolation { spill: f64, probed: f64 },

    #[error("restriction removed all mass")]
    AllMassRemoved,

    #[error("no admissible x in the requested range")]
    EmptyRange,

    #[error("zero denominator: window mass vanishes at x = {0}")]
    ZeroWindow(f64),

    #[error("tilt undefined: no mass at or below h = {0}")]
    EmptyTilt(f64),

    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("cache format error: {0}")]
    CacheFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line driver: 2 for
    /// configuration problems, 3 for tripped numerical guards.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::UnknownFamily(_)
            | Error::ParamOutOfRange { .. }
            | Error::OptionViolation(_)
            | Error::RegimeMismatch(_)
            | Error::InfiniteVariance
            | Error::Io(_)
            | Error::CacheFormat(_) => 2,
            Error::SpillViolation { .. }
            | Error::GridTooLarge { .. }
            | Error::NegativeMass { .. }
            | Error::MismatchedDelta(_, _)
            | Error::IncompatibleOrigins(_)
            | Error::QuadratureNonConvergence { .. }
            | Error::NoRoot(_)
            | Error::UnboundedBoundary
            | Error::NonConvergence { .. }
            | Error::AllMassRemoved
            | Error::EmptyRange
            | Error::ZeroWindow(_)
            | Error::EmptyTilt(_) => 3,
        }
    }
}
