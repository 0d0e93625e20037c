use std::path::PathBuf;

use thiserror::Error;

/// Failures of the alignment and matching routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("template has no minutiae")]
    EmptyTemplate,
    #[error("pair weights sum to zero")]
    ZeroTotalWeight,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Errors raised while reading or validating a template file.
#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: {message}")]
    Range { line: usize, message: String },
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot scan {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate entry for subject {subject} impression {impression}")]
    DuplicateEntry { subject: u32, impression: u32 },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("score set has no genuine or no impostor scores")]
    EmptyScores,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("could not place {wanted} minutiae at spacing {spacing} px (placed {placed})")]
    PlacementFailure {
        wanted: usize,
        placed: usize,
        spacing: f64,
    },
    #[error("invalid synthesis parameters: {0}")]
    InvalidParams(String),
}
