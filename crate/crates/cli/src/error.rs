use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] stl_core::Error),
    #[error(transparent)]
    Decoder(#[from] stl_decoder::DecoderError),
    #[error(transparent)]
    Eval(#[from] stl_eval::EvalError),
    #[error(transparent)]
    Mining(#[from] stl_mining::MiningError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(_) => "core",
            CliError::Decoder(_) => "decoder",
            CliError::Eval(_) => "eval",
            CliError::Mining(_) => "mining",
            CliError::Io { .. } => "io",
            CliError::Json(_) => "json",
        }
    }

    /// One-line JSON error record.
    pub fn record(&self, command: Option<&str>) -> String {
        json!({
            "error": {
                "kind": self.kind(),
                "command": command,
                "message": self.to_string(),
                "exit_code": self.exit_code(),
            }
        })
        .to_string()
    }
}
