//! Crate-wide error type.

use alloc::string::String;
use thiserror::Error;

/// Errors produced by pipeline operations.
///
/// Variants distinguish caller mistakes (config, ingest, capacity) from
/// violated internal contracts, so the CLI can map them onto exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),
    /// Input data could not be ingested (missing file, bad reference).
    #[error("ingest error: {0}")]
    Ingest(String),
    /// Malformed text input.
    #[error("parse error: {0}")]
    Parse(String),
    /// Data contradicts itself (label mismatch, duplicate ids, split overlap).
    #[error("consistency error: {0}")]
    Consistency(String),
    /// Not enough data to satisfy the request.
    #[error("capacity error: {0}")]
    Capacity(String),
    /// Argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A precondition the caller must uphold was violated.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Raster or file content has the wrong shape or encoding.
    #[error("format error: {0}")]
    Format(String),
    /// Persisted artifacts disagree with each other.
    #[error("integrity error: {0}")]
    Integrity(String),
    /// Training diverged or produced non-finite values.
    #[error("training fault: {0}")]
    Training(String),
    /// Multi-run inputs cannot be paired.
    #[error("pairing error: {0}")]
    Pairing(String),
}

pub type Result<T> = core::result::Result<T, Error>;
