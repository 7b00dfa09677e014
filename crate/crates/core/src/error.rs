use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid domain: lower bound {a} must be strictly below upper bound {b}")]
    InvalidDomain { a: f64, b: f64 },

    #[error("invalid size: {what} must be at least {min}, got {got}")]
    InvalidSize {
        what: &'static str,
        min: usize,
        got: usize,
    },

    #[error("x = {x} lies outside the basis domain [{a}, {b}]")]
    OutOfDomain { x: f64, a: f64, b: f64 },

    #[error("penalty order {order} must satisfy 1 <= m <= degree ({degree})")]
    InvalidOrder { order: usize, degree: usize },

    #[error("quantile level {0} is not in (0, 1)")]
    InvalidLevel(f64),

    #[error("smoothing width {0} must be positive")]
    InvalidWidth(f64),

    #[error("invalid smoothing parameter {0}: must be finite and non-negative")]
    InvalidLambda(f64),

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("no observations")]
    EmptyData,

    #[error("penalized normal matrix is numerically singular")]
    SingularSystem,

    #[error("every candidate smoothing parameter failed to fit")]
    AllFitsFailed,

    #[error("fit at quantile level {tau} failed: {source}")]
    LevelFit {
        tau: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("ladder overflow: [n^eta] + k = {offset} must stay below n + 1 = {limit}")]
    LadderOverflow { offset: u64, limit: u64 },

    #[error("nonpositive quantile estimate {value} at x = {x} (level {tau}); tail index logarithms are undefined")]
    NonpositiveQuantile { x: f64, tau: f64, value: f64 },

    #[error("nonpositive ladder quantile estimates at {} pooling point(s), first at x = {}", .points.len(), .points.first().copied().unwrap_or(f64::NAN))]
    NonpositiveQuantiles { points: Vec<f64> },

    #[error("target level {target} must exceed base level {base}")]
    LevelOrder { base: f64, target: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration for `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
