//! Run configuration: one TOML file with a section per pipeline stage.
//!
//! Cross-section consistency (the head input width must equal
//! `group_size * output_dim`) is validated at load, before any compute.
//! Each stage hashes the exact sections it depends on; those hashes name
//! the artifact directories.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use patchgroup_core::aggregate::AggregationMethod;
use patchgroup_core::augment::{AugmentConfig, ChannelStats};
use patchgroup_core::data::SyntheticConfig;
use patchgroup_core::embed::{GroupingPolicy, Remainder};
use patchgroup_core::head::{BaselineConfig, HeadConfig};
use patchgroup_core::moco::Stage1Config;
use patchgroup_core::nn::{Backbone, EncoderConfig};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: String,
    /// Seed list for multi-run sweeps; single-run commands take `--seed`.
    pub seeds: Vec<u64>,
    pub dataset: DatasetSection,
    pub augment: AugmentSection,
    pub encoder: EncoderSection,
    pub stage1: Stage1Section,
    pub grouping: GroupingSection,
    pub head: HeadSection,
    pub baseline: BaselineSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// `synthetic` generates data in memory from the config; `manifest`
    /// ingests an on-disk manifest.
    pub source: String,
    #[serde(default)]
    pub manifest_path: Option<String>,
    #[serde(default = "default_patients_train")]
    pub train_patients_per_class: usize,
    #[serde(default = "default_patients_val")]
    pub val_patients_per_class: usize,
    #[serde(default = "default_ppp")]
    pub patches_per_patient: [usize; 2],
    #[serde(default = "default_patch_size")]
    pub patch_size: usize,
    #[serde(default = "default_signal_fraction")]
    pub signal_fraction: f64,
    #[serde(default = "default_noise")]
    pub noise_level: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_patients_train() -> usize {
    20
}
fn default_patients_val() -> usize {
    10
}
fn default_ppp() -> [usize; 2] {
    [32, 32]
}
fn default_patch_size() -> usize {
    32
}
fn default_signal_fraction() -> f64 {
    0.3
}
fn default_noise() -> f64 {
    0.16
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AugmentSection {
    pub crop_scale: [f64; 2],
    pub output_size: usize,
    pub jitter_strength: f64,
    pub grayscale_prob: f64,
    pub blur_prob: f64,
    pub hflip_prob: f64,
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    pub backbone: String,
    pub output_dim: usize,
    pub projection_dim: usize,
    pub projection_mlp: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Stage1Section {
    pub queue_size: usize,
    pub momentum: f64,
    pub temperature: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GroupingSection {
    pub group_size: usize,
    pub train_remainder: String,
    pub val_remainder: String,
    pub shuffle_each_epoch: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HeadSection {
    /// Optional; when present it must equal `group_size * output_dim`.
    #[serde(default)]
    pub input_dim: Option<usize>,
    pub hidden_dims: Vec<usize>,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub threshold: f64,
    pub aggregation: String,
    #[serde(default)]
    pub balanced_per_class: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(CliError::io(path.display().to_string()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-section consistency, checked before any compute starts.
    pub fn validate(&self) -> Result<()> {
        match self.dataset.source.as_str() {
            "synthetic" => {}
            "manifest" => {
                if self.dataset.manifest_path.is_none() {
                    return Err(CliError::Config(
                        "dataset.source = \"manifest\" requires dataset.manifest_path".into(),
                    ));
                }
            }
            other => {
                return Err(CliError::Config(format!(
                    "dataset.source must be \"synthetic\" or \"manifest\", got {other:?}"
                )))
            }
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        let enc = self.encoder_config()?;
        enc.validate()?;
        let expected = self.grouping.group_size * enc.output_dim;
        if let Some(dim) = self.head.input_dim {
            if dim != expected {
                return Err(CliError::Config(format!(
                    "head.input_dim {dim} does not equal group_size*output_dim = {expected}"
                )));
            }
        }
        self.augment_config(0).validate()?;
        self.stage1_config(0).validate()?;
        self.head_config(0)?.validate()?;
        self.baseline_config(0).validate()?;
        self.train_grouping().validate()?;
        self.val_grouping().validate()?;
        if !(0.0..=1.0).contains(&self.eval.threshold) {
            return Err(CliError::Config(format!(
                "eval.threshold {} outside [0,1]",
                self.eval.threshold
            )));
        }
        AggregationMethod::parse(&self.eval.aggregation)?;
        if self.dataset.source == "synthetic" {
            self.synthetic_config(None)?.validate()?;
        }
        Ok(())
    }

    pub fn synthetic_config(&self, seed_override: Option<u64>) -> Result<SyntheticConfig> {
        Ok(SyntheticConfig {
            train_patients_per_class: self.dataset.train_patients_per_class,
            val_patients_per_class: self.dataset.val_patients_per_class,
            patches_per_patient: (
                self.dataset.patches_per_patient[0],
                self.dataset.patches_per_patient[1],
            ),
            patch_size: self.dataset.patch_size,
            signal_fraction: self.dataset.signal_fraction,
            noise_level: self.dataset.noise_level,
            seed: seed_override.unwrap_or(self.dataset.seed),
        })
    }

    pub fn stats(&self) -> ChannelStats {
        ChannelStats { mean: self.augment.mean, std: self.augment.std }
    }

    pub fn augment_config(&self, seed: u64) -> AugmentConfig {
        AugmentConfig {
            crop_scale: (self.augment.crop_scale[0], self.augment.crop_scale[1]),
            output_size: self.augment.output_size,
            jitter_strength: self.augment.jitter_strength,
            grayscale_prob: self.augment.grayscale_prob,
            blur_prob: self.augment.blur_prob,
            hflip_prob: self.augment.hflip_prob,
            stats: self.stats(),
            seed,
        }
    }

    pub fn encoder_config(&self) -> Result<EncoderConfig> {
        Ok(EncoderConfig {
            backbone: Backbone::parse(&self.encoder.backbone)?,
            output_dim: self.encoder.output_dim,
            projection_dim: self.encoder.projection_dim,
            projection_mlp: self.encoder.projection_mlp,
        })
    }

    pub fn stage1_config(&self, seed: u64) -> Stage1Config {
        Stage1Config {
            queue_size: self.stage1.queue_size,
            momentum: self.stage1.momentum,
            temperature: self.stage1.temperature,
            batch_size: self.stage1.batch_size,
            epochs: self.stage1.epochs,
            base_lr: self.stage1.base_lr,
            weight_decay: self.stage1.weight_decay,
            seed,
        }
    }

    pub fn train_grouping(&self) -> GroupingPolicy {
        GroupingPolicy {
            group_size: self.grouping.group_size,
            remainder: Remainder::parse(&self.grouping.train_remainder)
                .unwrap_or(Remainder::PadResample),
            shuffle_each_epoch: self.grouping.shuffle_each_epoch,
            seed: self.dataset.seed,
        }
    }

    /// Validation grouping is deterministic: no per-epoch reshuffle.
    pub fn val_grouping(&self) -> GroupingPolicy {
        GroupingPolicy {
            group_size: self.grouping.group_size,
            remainder: Remainder::parse(&self.grouping.val_remainder).unwrap_or(Remainder::Drop),
            shuffle_each_epoch: false,
            seed: self.dataset.seed,
        }
    }

    pub fn head_config(&self, seed: u64) -> Result<HeadConfig> {
        let enc = self.encoder_config()?;
        Ok(HeadConfig {
            input_dim: self.grouping.group_size * enc.output_dim,
            hidden_dims: self.head.hidden_dims.clone(),
            dropout: self.head.dropout,
            epochs: self.head.epochs,
            batch_size: self.head.batch_size,
            base_lr: self.head.base_lr,
            seed,
        })
    }

    pub fn baseline_config(&self, seed: u64) -> BaselineConfig {
        BaselineConfig {
            epochs: self.baseline.epochs,
            batch_size: self.baseline.batch_size,
            base_lr: self.baseline.base_lr,
            weight_decay: self.baseline.weight_decay,
            seed,
        }
    }

    pub fn aggregation(&self) -> Result<AggregationMethod> {
        Ok(AggregationMethod::parse(&self.eval.aggregation)?)
    }

    /// Output root: flag beats env (`PATCHGROUP_OUT`) beats config.
    pub fn output_root(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Ok(env) = std::env::var("PATCHGROUP_OUT") {
            if !env.is_empty() {
                return PathBuf::from(env);
            }
        }
        PathBuf::from(&self.output_dir)
    }
}

// ---------------------------------------------------------------------------
// Content addressing
// ---------------------------------------------------------------------------

fn hash_parts(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    let digest = h.finalize();
    let mut out = String::new();
    for b in &digest[..6] {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("config sections serialize")
}

/// Per-stage content hashes. Each stage hashes exactly the sections that
/// determine its artifact, plus the run seed where one applies.
pub struct StageHashes;

impl StageHashes {
    pub fn synth(cfg: &RunConfig, seed: u64) -> String {
        let mut ds = cfg.dataset.clone();
        ds.seed = seed;
        hash_parts(&["synth", &json(&ds)])
    }

    pub fn stage1(cfg: &RunConfig, seed: u64) -> String {
        hash_parts(&[
            "stage1",
            &json(&cfg.dataset),
            &json(&cfg.augment),
            &json(&cfg.encoder),
            &json(&cfg.stage1),
            &seed.to_string(),
        ])
    }

    pub fn extract(cfg: &RunConfig, seed: u64) -> String {
        hash_parts(&["extract", &Self::stage1(cfg, seed)])
    }

    pub fn head(cfg: &RunConfig, seed: u64) -> String {
        hash_parts(&[
            "head",
            &Self::extract(cfg, seed),
            &json(&cfg.grouping),
            &json(&cfg.head),
            &seed.to_string(),
        ])
    }

    pub fn baseline(cfg: &RunConfig, seed: u64) -> String {
        hash_parts(&[
            "baseline",
            &json(&cfg.dataset),
            &json(&cfg.augment),
            &json(&cfg.encoder),
            &json(&cfg.baseline),
            &seed.to_string(),
        ])
    }

    pub fn eval(cfg: &RunConfig, seed: u64, method: &str, balanced: bool) -> String {
        let upstream = match method {
            "grouped" => Self::head(cfg, seed),
            _ => Self::baseline(cfg, seed),
        };
        hash_parts(&[
            "eval",
            &upstream,
            &json(&cfg.eval),
            method,
            if balanced { "balanced" } else { "full" },
        ])
    }
}

/// Stage directory under the output root.
pub fn stage_dir(root: &Path, stage: &str, hash: &str) -> PathBuf {
    root.join(format!("{stage}-{hash}"))
}
