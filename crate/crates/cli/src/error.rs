use serde::Serialize;

use phishguard_core::adversarial::AdversarialError;
use phishguard_core::agents::AgentError;
use phishguard_core::email::EmailError;
use phishguard_core::eval::EvalError;
use phishguard_core::explain::ExplainError;
use phishguard_core::fusion::{CheckpointError, FusionError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Email(#[from] EmailError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Adversarial(#[from] AdversarialError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{failed} of {total} emails could not be classified; see errors.jsonl")]
    PartialFailure { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.as_ref().display().to_string();
        move |source| CliError::Io { path, source }
    }

    /// Stable machine-readable kind for the error record.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } | CliError::Email(EmailError::IoFailure { .. }) => "IoFailure",
            CliError::InvalidConfig(_) => "InvalidConfig",
            CliError::Email(_) => "EmailError",
            CliError::Agent(_) => "AgentError",
            CliError::Fusion(_) => "FusionError",
            CliError::Checkpoint(CheckpointError::Io { .. }) => "IoFailure",
            CliError::Checkpoint(_) => "CheckpointError",
            CliError::Adversarial(_) => "AdversarialError",
            CliError::Explain(_) => "ExplainError",
            CliError::Eval(_) => "EvalError",
            CliError::PartialFailure { .. } => "PartialFailure",
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            error: self.kind(),
            message: self.to_string(),
        }
    }
}

/// One JSON line on stderr when a command fails.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
}
