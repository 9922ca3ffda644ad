use std::path::Path;

use docsynth_core::checkpoint::CheckpointError;
use docsynth_core::sampler::SampleError;
use docsynth_core::schema::SchemaError;
use docsynth_core::tokenizer::TokenizerError;
use docsynth_core::train::TrainError;
use docsynth_eval::EvalError;
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{0}")]
    Config(String),
    #[error("corpus has {found} records; at least {needed} are required")]
    TooSmall { found: usize, needed: usize },
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Config(_) => "config",
            CliError::TooSmall { .. } => "too_small",
            CliError::Tokenizer(_) => "tokenizer",
            CliError::Schema(_) => "schema",
            CliError::Train(TrainError::NonFinite { .. }) => "non_finite_loss",
            CliError::Train(_) => "train",
            CliError::Sample(_) => "sample",
            CliError::Checkpoint(CheckpointError::Version { .. }) => "checkpoint_version",
            CliError::Checkpoint(_) => "checkpoint",
            CliError::Eval(_) => "eval",
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> Value {
        let mut v = json!({"error": {"kind": self.kind(), "message": self.to_string()}});
        if let CliError::Parse { path, line, .. } = self {
            v["error"]["path"] = json!(path);
            v["error"]["line"] = json!(line);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_carry_the_line() {
        let e = CliError::Parse { path: "a.jsonl".into(), line: 3, message: "bad".into() };
        let v = e.to_json();
        assert_eq!(v["error"]["kind"], "parse");
        assert_eq!(v["error"]["line"], 3);
        assert_eq!(v["error"]["message"], "a.jsonl:3: bad");
    }
}
