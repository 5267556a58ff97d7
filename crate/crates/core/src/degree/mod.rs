//! Degree sequences, CCDFs and heavy-tailed distribution fitting.

mod fit;
mod optimize;
mod sequence;
pub mod special;

use thiserror::Error;

pub use fit::{
    aic, fit_all, fit_samples, mle_fit, sample, select_model, Family, FitResult, Params,
    MIN_SAMPLES,
};
pub use optimize::{Minimum, NelderMead};
pub use sequence::{DegreeSequence, Direction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DegreeError {
    #[error("degree sequence is empty")]
    EmptySequence,
    #[error("unknown direction {0:?} (expected in or out)")]
    UnknownDirection(String),
    #[error("unknown distribution family {0:?}")]
    UnknownFamily(String),
    #[error("x_min must be a finite number ≥ 1, got {0}")]
    InvalidXmin(f64),
    #[error("only {found} samples at or above x_min, need {required}")]
    TooFewSamples { found: usize, required: usize },
    #[error("all retained samples are equal")]
    Degenerate,
    #[error("optimizer did not converge after {iterations} iterations (best {best}, LL {log_likelihood})")]
    NonConvergence {
        best: Params,
        log_likelihood: f64,
        iterations: usize,
    },
    #[error("underflow in the {family} normalizer (best {best})")]
    Underflow { family: Family, best: Params },
    #[error("{family} log-likelihood is not finite")]
    NonFinite { family: Family },
    #[error("no family was fitted successfully")]
    NoSuccessfulFit,
}
