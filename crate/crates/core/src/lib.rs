//! Patient-level MSS/MSI classification from tissue patches.
//!
//! The crate implements a two-stage pipeline plus the per-patch supervised
//! baseline it is compared against:
//!
//! 1. **Stage 1** ([`moco`]): a patch encoder is pretrained with momentum
//!    contrast — a gradient-trained query encoder, a momentum-averaged key
//!    encoder, and a FIFO queue of negative keys driving an InfoNCE loss.
//! 2. **Stage 2** ([`embed`] + [`head`]): the frozen encoder embeds every
//!    patch, embeddings are concatenated into per-patient groups of `n_g`
//!    vectors, and a small MLP classifies the groups.
//!
//! Per-unit probabilities (patches or groups) are reduced to a patient
//! decision in [`aggregate`], and [`metrics`] covers accuracy, ROC/AUC,
//! paired t-tests, and multi-run summaries.
//!
//! Everything here is deterministic given explicit seeds and does no IO;
//! file formats and orchestration live in the companion CLI crate. The crate
//! builds without `std` (`--no-default-features`, `alloc` required).

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod aggregate;
pub mod augment;
pub mod data;
pub mod embed;
pub mod error;
pub mod head;
pub mod metrics;
pub mod moco;
pub mod nn;
pub mod raster;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
