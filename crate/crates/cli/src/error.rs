use std::fmt;
use std::process::ExitCode;

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or inconsistent settings (exit 2).
    Config(String),
    /// Unreadable, malformed or unusable input data (exit 3).
    Data(String),
    /// The numerics gave up (exit 4).
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<exquant::Error> for CliError {
    fn from(e: exquant::Error) -> Self {
        use exquant::Error as E;
        let msg = e.to_string();
        match e {
            E::LevelFit { source, .. } => match CliError::from(*source) {
                CliError::Config(_) => CliError::Config(msg),
                CliError::Data(_) => CliError::Data(msg),
                CliError::Numeric(_) => CliError::Numeric(msg),
            },
            E::InvalidDomain { .. }
            | E::OutOfDomain { .. }
            | E::LengthMismatch { .. }
            | E::EmptyData
            | E::NonFinite("response") => CliError::Data(msg),
            E::InvalidSize { .. }
            | E::InvalidOrder { .. }
            | E::InvalidLevel(_)
            | E::InvalidWidth(_)
            | E::InvalidLambda(_)
            | E::LadderOverflow { .. }
            | E::LevelOrder { .. }
            | E::Config { .. } => CliError::Config(msg),
            E::SingularSystem
            | E::AllFitsFailed
            | E::NonpositiveQuantile { .. }
            | E::NonpositiveQuantiles { .. }
            | E::NonFinite(_) => CliError::Numeric(msg),
        }
    }
}

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub type CliResult<T> = std::result::Result<T, CliError>;
