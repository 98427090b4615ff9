use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its admissible range.
    InvalidParameter(String),
    /// Inputs are inconsistent (dimension mismatch, bad label, empty batch).
    InvalidInput(String),
    /// Not enough samples to fill one analysis window.
    InsufficientData { needed: usize, got: usize },
    /// A matrix that must be Hurwitz has an eigenvalue with nonnegative real part.
    NotStable { max_real_part: f64 },
    /// The transfer function fails the positive-real frequency test.
    NotSpr { omega: f64, real_part: f64 },
    /// The KYP equations could not be solved to tolerance.
    KypSolveFailed { residual: f64 },
    /// An adaptive step divides by a zero curvature entry.
    DegenerateCurvature { index: usize },
    /// The static comparator minimization did not converge.
    BaselineFailure { iterations: usize, residual: f64 },
    /// A Lyapunov specification violates the α lower bound.
    InvalidSpec { alpha: f64, bound: f64 },
    /// A non-finite value appeared during integration.
    Diverged { t: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::InsufficientData { needed, got } => {
                write!(f, "insufficient data: need {needed} samples, got {got}")
            }
            Error::NotStable { max_real_part } => {
                write!(f, "matrix is not Hurwitz (max real part {max_real_part:e})")
            }
            Error::NotSpr { omega, real_part } => {
                write!(f, "transfer function is not strictly positive real: Re W(j{omega:e}) = {real_part:e}")
            }
            Error::KypSolveFailed { residual } => {
                write!(f, "KYP certificate not found (residual {residual:e})")
            }
            Error::DegenerateCurvature { index } => {
                write!(f, "degenerate curvature: zero second-moment entry at index {index}")
            }
            Error::BaselineFailure { iterations, residual } => {
                write!(f, "baseline minimization failed after {iterations} iterations (residual {residual:e})")
            }
            Error::InvalidSpec { alpha, bound } => {
                write!(f, "invalid Lyapunov spec: alpha {alpha:e} must exceed {bound:e}")
            }
            Error::Diverged { t } => write!(f, "diverged at t = {t}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn check_dim(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::InvalidInput(alloc::format!("{what}: expected dimension {expected}, got {got}")));
    }
    Ok(())
}
