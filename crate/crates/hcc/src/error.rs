use std::io;
use std::path::{Path, PathBuf};

use hcc_core::{ConformalError, CoverError, EvalError, InferenceError};
use serde_json::json;
use thiserror::Error;

/// Exit status for bad configuration or invalid input data.
pub const EXIT_VALIDATION: i32 = 1;
/// Exit status for failures while running a valid configuration.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("{}: {message}", path.display())]
    Model { path: PathBuf, message: String },
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Core(#[from] hcc_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn input(path: &Path, message: impl Into<String>) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub fn model(path: &Path, message: impl Into<String>) -> Self {
        CliError::Model {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub fn is_validation(&self) -> bool {
        use hcc_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Input { .. } | CliError::Model { .. } => true,
            CliError::Io { .. } | CliError::ThreadPool(_) => false,
            CliError::Core(e) => match e {
                E::Taxonomy(_) | E::Score(_) => true,
                E::Cover(c) => matches!(
                    c,
                    CoverError::NotANolCover { .. }
                        | CoverError::MissingLeafCover
                        | CoverError::TaxonomyMismatch { .. }
                ),
                E::Conformal(c) => matches!(c, ConformalError::AlphaOutOfRange { .. }),
                E::Inference(i) => matches!(
                    i,
                    InferenceError::InvalidBeta { .. } | InferenceError::MissingRiskControl
                ),
                E::Eval(e) => matches!(
                    e,
                    EvalError::InvalidRatio { .. }
                        | EvalError::TooFewRecords { .. }
                        | EvalError::InvalidSynth(_)
                        | EvalError::EmptySweep
                ),
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            EXIT_VALIDATION
        } else {
            EXIT_RUNTIME
        }
    }

    /// Single-line machine-readable record written to stderr.
    pub fn to_record(&self) -> String {
        let kind = if self.is_validation() {
            "validation"
        } else {
            "runtime"
        };
        json!({
            "error": {
                "kind": kind,
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        })
        .to_string()
    }
}

macro_rules! core_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        })*
    };
}

core_from!(
    hcc_core::TaxonomyError,
    hcc_core::ScoreError,
    CoverError,
    ConformalError,
    InferenceError,
    EvalError
);
