use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("configuration has {found} bits but the lattice has {expected} edges")]
    LengthMismatch { expected: usize, found: usize },

    #[error("edge id {id} is out of range for {num_bits} bits")]
    EdgeOutOfRange { id: usize, num_bits: usize },

    #[error("exhaustive enumeration over {bits} bits exceeds the cap of {cap}")]
    CapExceeded { bits: usize, cap: usize },

    #[error("observable is constant under the product measure")]
    ConstantObservable,

    #[error("time series is constant")]
    ConstantSeries,

    #[error("time series of length {len} is too short for {lags} lags (need at least {needed})")]
    SeriesTooShort { len: usize, lags: usize, needed: usize },

    #[error("autocorrelation window did not close within {s_max} lags")]
    WindowNotClosed { s_max: usize },

    #[error("radius {radius} is out of range for a torus of side {side} (need 1 <= r < L/2)")]
    RadiusOutOfRange { radius: usize, side: usize },

    #[error("malformed query tree: {0}")]
    MalformedQueryTree(String),

    #[error("argument {value} outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("operation requires a {expected} lattice")]
    WrongLatticeKind { expected: &'static str },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
