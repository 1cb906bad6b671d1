use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by transforms, constraint machinery, solvers and learners.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A signal axis is not divisible by the sampling factor (or pooling window).
    ShapeNotDivisible { shape: Vec<usize>, factor: Vec<usize> },
    /// Signal and filter channel counts disagree.
    ChannelMismatch { signal: usize, filter: usize },
    /// Coefficient set and filter bank sizes disagree.
    ArityMismatch { expected: usize, found: usize },
    /// Two operands have incompatible geometry.
    DimensionMismatch(String),
    /// Two signals that must share a shape do not.
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    /// A spectral grid is not divisible by the sampling matrix.
    GridNotDivisible { grid: Vec<usize>, factor: Vec<usize> },
    /// The operation is only defined for a narrower case.
    UnsupportedCase(&'static str),
    /// Malformed construction input (lengths, non-finite data, bad parameters).
    InvalidInput(String),
    UnknownBankName(String),
    /// Iterative solver hit its budget before reaching tolerance.
    NotConverged { iterations: usize, residual: f64 },
    /// Objective blew up during learning.
    Diverged { iteration: usize, objective: f64 },
    /// Constraint-set warm start is too far from feasibility.
    InfeasibleStart { residual: f64 },
    /// Bilinear constraint residual stopped decreasing above its bound.
    ConstraintStalled { residual: f64 },
    /// `H(A) B = f` has no solution for this decomposition bank.
    InconsistentSystem { residual: f64 },
    /// Lowpass filter lost its nonzero mean.
    LowpassDegenerate { tap_sum: f64 },
    /// Multi-level decomposition needs exactly one lowpass filter at index 0.
    NoLowpassFlag,
    /// Tree mode does not match the requested operation.
    ModeMismatch,
    /// A pooling switch points outside its window.
    InvalidSwitch { index: usize, window_len: usize },
    /// Value outside the range an activation inverse accepts.
    OutOfRange { value: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeNotDivisible { shape, factor } => {
                write!(f, "shape {shape:?} is not divisible by {factor:?}")
            }
            Error::ChannelMismatch { signal, filter } => write!(
                f,
                "signal has {signal} channels but filters expect {filter}"
            ),
            Error::ArityMismatch { expected, found } => {
                write!(f, "expected {expected} coefficient maps, found {found}")
            }
            Error::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::ShapeMismatch { left, right } => {
                write!(f, "shape mismatch: {left:?} vs {right:?}")
            }
            Error::GridNotDivisible { grid, factor } => {
                write!(f, "DFT grid {grid:?} is not divisible by {factor:?}")
            }
            Error::UnsupportedCase(what) => write!(f, "unsupported case: {what}"),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::UnknownBankName(name) => write!(f, "unknown filter bank '{name}'"),
            Error::NotConverged {
                iterations,
                residual,
            } => write!(
                f,
                "solver did not converge after {iterations} iterations (residual {residual:e})"
            ),
            Error::Diverged {
                iteration,
                objective,
            } => write!(
                f,
                "learning diverged at iteration {iteration} (objective {objective:e})"
            ),
            Error::InfeasibleStart { residual } => {
                write!(f, "warm start violates the constraints (residual {residual:e})")
            }
            Error::ConstraintStalled { residual } => {
                write!(f, "bilinear constraint stalled at residual {residual:e}")
            }
            Error::InconsistentSystem { residual } => write!(
                f,
                "reconstruction system H(A)B = f is inconsistent (residual {residual:e}); \
                 learn decomposition and reconstruction filters jointly"
            ),
            Error::LowpassDegenerate { tap_sum } => {
                write!(f, "lowpass filter has vanishing tap sum {tap_sum:e}")
            }
            Error::NoLowpassFlag => {
                f.write_str("filter bank needs exactly one lowpass filter, at index 0")
            }
            Error::ModeMismatch => f.write_str("decomposition tree has the wrong mode"),
            Error::InvalidSwitch { index, window_len } => {
                write!(f, "switch {index} outside pooling window of {window_len}")
            }
            Error::OutOfRange { value } => {
                write!(f, "value {value} outside the activation range")
            }
        }
    }
}

impl core::error::Error for Error {}

impl Error {
    /// Numerical failures (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. }
                | Error::Diverged { .. }
                | Error::InfeasibleStart { .. }
                | Error::ConstraintStalled { .. }
                | Error::InconsistentSystem { .. }
                | Error::LowpassDegenerate { .. }
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;
