//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("manifest malformed: {0}")]
    ManifestMalformed(String),

    #[error("size mismatch for {path}: expected {expected} bytes, found {found}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("checksum mismatch for {path}: manifest declares {declared}, file hashes to {actual}")]
    ChecksumMismatch {
        path: PathBuf,
        declared: String,
        actual: String,
    },

    #[error("sample row sums to {sum} at instance {instance}, pass {pass} (expected 1 within {tolerance})")]
    NonStochasticRow {
        instance: usize,
        pass: usize,
        sum: f64,
        tolerance: f64,
    },

    #[error("zero or non-finite embedding at instance {instance}")]
    ZeroEmbedding { instance: usize },

    #[error("label {label} out of range for {num_classes} classes at instance {instance}")]
    LabelOutOfRange {
        instance: usize,
        label: u32,
        num_classes: usize,
    },

    #[error("records disagree in shape: {0}")]
    HeterogeneousShapes(String),

    #[error("record list is empty")]
    EmptyRecordList,

    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid quantile range: q_lo={q_lo}, q_hi={q_hi} (need 0 <= q_lo < q_hi <= 1)")]
    QuantileRange { q_lo: f64, q_hi: f64 },

    #[error("negative ignorance mass {0}: singleton masses exceed 1, upstream clamping was bypassed")]
    NegativeIgnorance(f64),

    #[error("evidence list is empty")]
    EmptyEvidenceList,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("k={k} outside valid range 1..={n}")]
    KTooLarge { k: usize, n: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty confusion: no evaluated instances")]
    EmptyConfusion,

    #[error("confidence {value} outside [0, 1] at position {index}")]
    OutOfRangeConfidence { index: usize, value: f64 },

    #[error("conservation violated at threshold {threshold}: {detail}")]
    ConservationViolation { threshold: f64, detail: String },

    #[error("tagging failed for {} instance(s); first failure at instance {}: {}",
            failures.len(), failures[0].0, failures[0].1)]
    BatchFailure { failures: Vec<(u64, String)> },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }
}
