use thiserror::Error;

/// Command failures, grouped by the process exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("input: {0}")]
    Input(String),
    #[error("numeric: {0}")]
    Numeric(String),
    #[error("incompatible: {0}")]
    Compat(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Compat(_) => 4,
        }
    }
}

impl From<triage_core::Error> for CliError {
    fn from(e: triage_core::Error) -> Self {
        use triage_core::Error as E;
        match e {
            E::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            E::WidthMismatch { .. } | E::ShapeMismatch { .. } => CliError::Compat(e.to_string()),
            E::Config(_) => CliError::Usage(e.to_string()),
            E::Empty(_) | E::GoldOutOfRange { .. } | E::SplitTooLarge { .. } => CliError::Input(e.to_string()),
        }
    }
}
