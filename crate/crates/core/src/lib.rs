//! Numerics for the two-dimensional directed polymer on the intermediate
//! disorder scale.
//!
//! * [`walk`]: the lattice random walk, its transition tables and the replica
//!   overlap `R_N`.
//! * [`disorder`]: disorder laws, `λ(β)`, `σ²(β)` and the β selection rules.
//! * [`polymer`]: transfer-matrix partition functions for a fixed environment.
//! * [`moments`]: exact second moments through the renewal recursion.
//! * [`dickman`]: Dickman subordinator analytics and its Green's function.
//! * [`kernels`]: continuum covariance kernels of the critical flow.
//! * [`experiments`]: Monte Carlo harness with statistical reports.

pub mod config;
pub mod conv;
pub mod dickman;
pub mod disorder;
pub mod experiments;
pub mod export;
pub mod kernels;
pub mod moments;
pub mod polymer;
pub mod quad;
pub mod rng;
pub mod stats;
pub mod walk;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid step law: {0}")]
    InvalidStepLaw(String),
    #[error("horizon {n} exceeds kernel cache {cache}")]
    HorizonExceedsCache { n: usize, cache: usize },
    #[error("beta = {beta} outside the finite range of the {family} law")]
    BetaOutOfRange { family: String, beta: f64 },
    #[error("root finding failed: {0}")]
    RootFinding(String),
    #[error("critical window collapses: target variance {0} <= 0")]
    WindowCollapse(f64),
    #[error("truncated mass {mass:e} exceeds cap {cap:e}")]
    TruncationCapExceeded { mass: f64, cap: f64 },
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_6;
