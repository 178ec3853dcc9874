use alloc::string::String;
use core::fmt;

/// Errors raised by the core pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter was NaN or infinite.
    InvalidParameter(String),
    /// Covariance too ill-conditioned to invert.
    DegenerateCovariance {
        condition: f64,
    },
    /// Render found a non-finite value on a Gaussian.
    NonFinite {
        id: u64,
        field: &'static str,
    },
    /// Backward was handed a render from a different cloud state.
    StaleAuxiliary {
        rendered: u64,
        current: u64,
    },
    /// Two images or buffers disagree in size.
    Shape(String),
    NotFound {
        id: u64,
    },
    OutOfBounds {
        index: usize,
        len: usize,
    },
    Config(String),
    /// Training produced a non-finite loss.
    Diverged {
        iteration: usize,
        last_checkpoint: Option<usize>,
    },
    /// Raised by a caller-supplied hook.
    External(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::DegenerateCovariance { condition } => {
                write!(f, "degenerate covariance (condition number {condition:e})")
            }
            Error::NonFinite { id, field } => {
                write!(f, "non-finite {field} on gaussian {id}")
            }
            Error::StaleAuxiliary { rendered, current } => write!(
                f,
                "render output is stale: rendered at generation {rendered}, cloud is at {current}"
            ),
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Error::NotFound { id } => write!(f, "gaussian {id} not found"),
            Error::OutOfBounds { index, len } => {
                write!(f, "index {index} out of range 0..{len}")
            }
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Diverged {
                iteration,
                last_checkpoint,
            } => {
                write!(f, "training diverged at iteration {iteration}")?;
                match last_checkpoint {
                    Some(it) => write!(f, "; last good checkpoint at iteration {it}"),
                    None => write!(f, "; no checkpoint written yet"),
                }
            }
            Error::External(msg) => f.write_str(msg),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
