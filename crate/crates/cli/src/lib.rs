//! Orchestration around the core pipeline: run configuration, artifact
//! formats (manifests, checkpoints, embedding stores, reports), plotting,
//! and the subcommand implementations behind the `patchgroup` binary.
//!
//! Artifacts are content-addressed: every stage directory name carries a
//! hash of exactly the configuration sections (plus seed) that determine its
//! output, so stale artifacts can never be silently reused across config
//! changes.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest_io;
pub mod plot;
pub mod report_io;
pub mod runlog;
pub mod store_io;

pub use error::{CliError, ExitCode};
