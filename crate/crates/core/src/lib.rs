//! Numerical laboratory for the big-jump behaviour of heavy-tailed random
//! walks: exact lattice convolution oracles, boundary-sequence solvers,
//! regular-variation diagnostics, and variance-reduced Monte Carlo.

pub mod cli;
pub mod dist;
pub mod error;
pub mod karamata;
pub mod lattice;
pub mod mc;
pub mod numeric;
pub mod rng;
pub mod seqs;

pub use dist::{make_family, Family, StandardizeMode, StepDistribution, TiltedTruncated};
pub use error::{Error, Result};
pub use rng::CounterRng;
