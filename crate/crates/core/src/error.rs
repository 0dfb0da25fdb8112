use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A grid function carried a NaN or infinite value.
    NonFinite { index: usize, value: f64 },
    /// A parameter lies outside the domain of the requested operation.
    Domain(String),
    /// Two objects were built on different grids.
    GridMismatch { expected: usize, found: usize },
    /// An operator chain failed at `position` (0 = leftmost atom).
    Chain { position: usize, source: alloc::boxed::Box<Error> },
    /// A Neumann series stopped shrinking.
    NonConvergence { norms: Vec<f64> },
    /// Cholesky factorisation failed even with the largest allowed ridge.
    Cholesky { jitter: f64, pivot: usize, min_diagonal: f64 },
    /// A precondition on the inputs was not met.
    Precondition(String),
    /// Hurst parameters that the construction does not cover.
    Unsupported(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite { index, value } => {
                write!(f, "non-finite value {value} at grid index {index}")
            }
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::GridMismatch { expected, found } => {
                write!(f, "grid mismatch: expected N = {expected}, found N = {found}")
            }
            Error::Chain { position, source } => {
                write!(f, "operator chain atom {position}: {source}")
            }
            Error::NonConvergence { norms } => {
                write!(f, "Neumann series not converging; term norms: {norms:?}")
            }
            Error::Cholesky { jitter, pivot, min_diagonal } => {
                write!(f, "Cholesky failed at pivot {pivot} with ridge {jitter:e} (smallest diagonal {min_diagonal:e})")
            }
            Error::Precondition(msg) => write!(f, "precondition violated: {msg}"),
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

/// Non-fatal diagnostics attached to a result.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Discrete Hölder quotient above the configured bound.
    Regularity { index: usize, ratio: f64, bound: f64 },
    /// Drift failed a spot check of its growth or Hölder condition.
    DriftCondition(String),
    /// Importance weights collapsed onto few samples.
    LowEffectiveSampleSize { ess: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::Regularity { index, ratio, bound } => {
                write!(f, "increment quotient {ratio:.3e} at index {index} exceeds regularity bound {bound:.3e}")
            }
            Warning::DriftCondition(msg) => write!(f, "drift condition: {msg}"),
            Warning::LowEffectiveSampleSize { ess } => {
                write!(f, "effective sample size {ess:.1} below 10")
            }
        }
    }
}

/// A value together with the warnings raised while computing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checked<T> {
    pub value: T,
    pub warnings: Vec<Warning>,
}

impl<T> Checked<T> {
    pub fn clean(value: T) -> Self {
        Checked { value, warnings: Vec::new() }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Checked<U> {
        Checked { value: f(self.value), warnings: self.warnings }
    }
}
