use std::fmt;

use nwfr_core::conformal::ConformalError;
use nwfr_core::formats::FormatError;
use nwfr_core::ingest::IngestError;
use nwfr_core::simgen::SimError;
use nwfr_core::{GraphError, ModelError};

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Invalid arguments (exit 2).
    Usage(String),
    /// Unreadable, malformed or inconsistent input (exit 3).
    Data(String),
    /// Estimation failed numerically (exit 4).
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        };
        // one line, whatever the source error looked like
        f.write_str(&msg.split_whitespace().collect::<Vec<_>>().join(" "))
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let m = e.to_string();
        match e {
            ModelError::SingularSystem { .. } | ModelError::AllFitsFailed | ModelError::DegenerateVariance => {
                CliError::Numeric(m)
            }
            ModelError::NonpositiveBandwidth(_) | ModelError::InvalidArgument(_) => CliError::Usage(m),
            _ => CliError::Data(m),
        }
    }
}

impl From<ConformalError> for CliError {
    fn from(e: ConformalError) -> Self {
        match e {
            ConformalError::Model(m) => m.into(),
            ConformalError::InvalidAlpha(_) | ConformalError::InvalidFraction(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidCombination(m) => CliError::Usage(format!("invalid scenario: {m}")),
            SimError::Model(m) => m.into(),
            SimError::Conformal(c) => c.into(),
            SimError::Graph(g) => g.into(),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Model(m) => m.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Data(e.to_string())
    }
}
