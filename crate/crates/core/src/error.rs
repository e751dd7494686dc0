use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimeError {
    #[error("epoch seconds must be non-negative, got {0}")]
    NegativeEpoch(i64),
    #[error("epoch seconds {0} out of representable range")]
    OutOfRange(i64),
    #[error("unparseable time {0:?}")]
    Unparseable(String),
    #[error("local time {0:?} does not exist in the zone")]
    NonexistentLocal(String),
    #[error("unknown time zone {0:?}")]
    UnknownZone(String),
    #[error("bucket duration must be positive")]
    ZeroDuration,
}

/// Non-fatal problem found while parsing a text artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarning {
    /// 1-based line number, 0 when not line-addressable.
    pub line: usize,
    pub message: String,
}

impl ParseWarning {
    pub(crate) fn new(line: usize, message: impl Into<String>) -> Self {
        ParseWarning {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("input is empty")]
    EmptyInput,
    #[error("XML syntax error at line {line}, column {column}: {message}")]
    Xml {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("manifest has no package attribute")]
    MissingPackage,
    #[error("invalid JSON line {line}: {message}")]
    JsonLine { line: usize, message: String },
}

impl From<roxmltree::Error> for ParseError {
    fn from(e: roxmltree::Error) -> Self {
        let pos = e.pos();
        ParseError::Xml {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error("cannot seal an empty bundle")]
    EmptyBundle,
    #[error("digest mismatch for item {label:?}: recorded {recorded}, computed {computed}")]
    DigestMismatch {
        label: String,
        recorded: String,
        computed: String,
    },
    #[error(
        "duplicate evidence {source_kind} / {label:?} for origin {origin:?} at {collected_at}"
    )]
    DuplicateSource {
        source_kind: String,
        label: String,
        origin: String,
        collected_at: i64,
    },
    #[error("invalid item label {0:?}: use [A-Za-z0-9_.-]")]
    InvalidLabel(String),
    #[error("manifest digest mismatch: recorded {recorded}, computed {computed}")]
    ManifestMismatch { recorded: String, computed: String },
    #[error("no evidence item of kind {0}")]
    MissingKind(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("device unreachable: {0}")]
    Unreachable(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid scenario: {0}")]
pub struct ScenarioError(pub String);

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}
