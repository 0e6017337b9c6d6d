//! Process-level error classification. Every failure maps to one of three
//! exit codes: 2 for configuration problems, 3 for unreadable or malformed
//! input data, 4 for numerical degeneracies (zero vectors, zero variance,
//! collapsed geometry).

use avh_core::AvhError;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn config<S: Into<String>>(msg: S) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data<S: Into<String>>(msg: S) -> Self {
        CliError::Data(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Data(msg) => write!(f, "data error: {msg}"),
            CliError::Numeric(msg) => write!(f, "numerical error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<AvhError> for CliError {
    fn from(e: AvhError) -> Self {
        match &e {
            AvhError::Parse { .. } | AvhError::Io(_) => CliError::Data(e.to_string()),
            AvhError::ZeroNorm { .. } | AvhError::Degenerate { .. } | AvhError::ZeroVariance { .. } => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}
