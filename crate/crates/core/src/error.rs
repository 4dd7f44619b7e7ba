use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A constructor rejected a parameter.
    InvalidParameter {
        name: &'static str,
        detail: String,
    },
    /// Round index outside a finite timeline (rounds are 1-based).
    RoundOutOfRange {
        round: usize,
        len: usize,
    },
    /// Diagnostic window not covered by the supplied trajectories.
    WindowOutOfRange {
        start: usize,
        len: usize,
        available: usize,
    },
    DimensionMismatch {
        expected: usize,
        found: usize,
    },
    /// A caller broke an operation's contract, e.g. selected but unavailable.
    ContractViolation(&'static str),
    EmptySelection,
    /// Asymptotic reactive weights are undefined when every client is always available.
    DegenerateLimit,
    UndefinedInput(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter { name, detail } => {
                write!(f, "invalid parameter `{name}`: {detail}")
            }
            Error::RoundOutOfRange { round, len } => {
                write!(f, "round {round} is outside the timeline of length {len}")
            }
            Error::WindowOutOfRange {
                start,
                len,
                available,
            } => write!(
                f,
                "window [{start}, {}] exceeds trajectory of {available} rounds",
                start + len - 1
            ),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::ContractViolation(what) => write!(f, "contract violation: {what}"),
            Error::EmptySelection => f.write_str("cannot normalize an empty weight set"),
            Error::DegenerateLimit => {
                f.write_str("degenerate limit: every client is always available")
            }
            Error::UndefinedInput(what) => write!(f, "undefined input: {what}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(name: &'static str, detail: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        detail: detail.into(),
    }
}
