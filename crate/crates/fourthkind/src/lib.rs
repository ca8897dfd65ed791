//! Minmax estimation over relative-likelihood regions.
//!
//! Given observed data and a parametric model, this crate calibrates a rarity
//! level `alpha` from a significance target `beta*`, builds the region of
//! parameters whose relative likelihood stays at or above `alpha`, and solves
//! the minmax estimation game over that region. The optimal estimate and its
//! worst-case risk are the center and squared radius of the minimum enclosing
//! ball of the region's image under the quantity-of-interest map; the solver
//! also recovers a discrete worst-case measure on the ball boundary and a
//! duality-gap certificate.

// negated float comparisons are deliberate throughout: NaN must take the
// rejecting branch, which `a < b` would silently skip
#![allow(clippy::neg_cmp_op_on_partial_ord)]

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod cases;
pub mod de;
pub mod farthest;
pub mod fmt;
pub mod game;
pub mod miniball;
pub mod model;
pub mod numerics;
pub mod region;
pub mod significance;

/// Error taxonomy shared by all modules.
///
/// The CLI maps categories to exit codes: calibration failures to 2,
/// infeasibility to 3, nonconvergence to 4, everything I/O- or input-shaped
/// to 5.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain: {0}")]
    Domain(String),
    #[error("state: {0}")]
    State(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("nonconverged after {iterations} iterations: {message}")]
    Nonconverged { iterations: usize, message: String },
    #[error("calibration: {0}")]
    Calibration(String),
    #[error("inconsistent: {0}")]
    Inconsistent(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
}

/// Machine-readable failure category, stable across error message changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Calibration,
    Infeasible,
    Nonconverged,
    Io,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Calibration(_) => ErrorCategory::Calibration,
            Error::Infeasible(_) => ErrorCategory::Infeasible,
            Error::Nonconverged { .. } | Error::Inconsistent(_) => ErrorCategory::Nonconverged,
            Error::Domain(_) | Error::State(_) | Error::Io(_) | Error::Parse(_) => {
                ErrorCategory::Io
            }
        }
    }
}

impl ErrorCategory {
    pub fn name(&self) -> &'static str {
        match self {
            ErrorCategory::Calibration => "calibration",
            ErrorCategory::Infeasible => "infeasible",
            ErrorCategory::Nonconverged => "nonconverged",
            ErrorCategory::Io => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            ErrorCategory::Calibration => 2,
            ErrorCategory::Infeasible => 3,
            ErrorCategory::Nonconverged => 4,
            ErrorCategory::Io => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
