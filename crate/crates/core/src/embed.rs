//! Frozen-encoder embedding extraction and per-patient grouping.
//!
//! Stage 2 consumes patches only through this store: one `dim`-vector per
//! patch from the frozen trunk, grouped per patient into concatenations of
//! `group_size` embeddings (vector length `group_size * dim`). Groups never
//! mix patients.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;

use crate::augment::{eval_transform, ChannelStats};
use crate::data::{Label, PatchSet};
use crate::error::{Error, Result};
use crate::nn::{Encoder, Feat};
use crate::rng::{shuffle, StreamKey};

/// Embeddings of one patient, rows in patch order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientEmbeddings {
    pub patient_id: String,
    pub label: Label,
    pub patch_ids: Vec<String>,
    /// `patch_ids.len() x dim`, row-major.
    pub rows: Vec<f64>,
}

impl PatientEmbeddings {
    pub fn n_patches(&self) -> usize {
        self.patch_ids.len()
    }

    pub fn row(&self, i: usize, dim: usize) -> &[f64] {
        &self.rows[i * dim..(i + 1) * dim]
    }
}

/// All patch embeddings of one split, patients sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub dim: usize,
    pub patients: Vec<PatientEmbeddings>,
    /// Hash of the producing checkpoint, stamped by the caller.
    pub encoder_fingerprint: String,
}

impl EmbeddingStore {
    pub fn total_rows(&self) -> usize {
        self.patients.iter().map(|p| p.n_patches()).sum()
    }

    pub fn patient_labels(&self) -> BTreeMap<String, Label> {
        self.patients
            .iter()
            .map(|p| (p.patient_id.clone(), p.label))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Integrity("store dimension is zero".to_string()));
        }
        for p in &self.patients {
            if p.rows.len() != p.patch_ids.len() * self.dim {
                return Err(Error::Integrity(format!(
                    "patient {:?}: {} rows bytes vs {} patches x dim {}",
                    p.patient_id,
                    p.rows.len(),
                    p.patch_ids.len(),
                    self.dim
                )));
            }
            if p.patch_ids.is_empty() {
                return Err(Error::Integrity(format!(
                    "patient {:?} has no patches",
                    p.patient_id
                )));
            }
        }
        Ok(())
    }
}

const EXTRACT_CHUNK: usize = 64;

/// Embed every patch of `patches` with the frozen trunk (deterministic eval
/// transform, eval-mode forward). The encoder is untouched; repeated calls
/// produce identical stores.
pub fn extract_embeddings(
    encoder: &Encoder,
    patches: &PatchSet,
    output_size: usize,
    stats: &ChannelStats,
    fingerprint: &str,
) -> Result<EmbeddingStore> {
    if patches.is_empty() {
        return Err(Error::Config("no patches to embed".to_string()));
    }
    let dim = encoder.cfg.output_dim;
    let mut by_patient: BTreeMap<&str, PatientEmbeddings> = BTreeMap::new();
    for item in &patches.items {
        by_patient
            .entry(item.patient_id.as_str())
            .or_insert_with(|| PatientEmbeddings {
                patient_id: item.patient_id.clone(),
                label: item.label,
                patch_ids: Vec::new(),
                rows: Vec::new(),
            });
    }
    for chunk in patches.items.chunks(EXTRACT_CHUNK) {
        let views: Result<Vec<_>> = chunk
            .iter()
            .map(|it| eval_transform(&it.raster, output_size, stats))
            .collect();
        let x = Feat::from_views(&views?)?;
        let feats = encoder.features_eval(x);
        if feats.c != dim {
            return Err(Error::Integrity(format!(
                "encoder produced {}-d features, config says {dim}",
                feats.c
            )));
        }
        for (i, item) in chunk.iter().enumerate() {
            let p = by_patient.get_mut(item.patient_id.as_str()).unwrap();
            p.patch_ids.push(item.patch_id.clone());
            p.rows.extend_from_slice(feats.row(i));
        }
    }
    let store = EmbeddingStore {
        dim,
        patients: by_patient.into_values().collect(),
        encoder_fingerprint: fingerprint.to_string(),
    };
    store.validate()?;
    Ok(store)
}

/// What to do with the remainder when a patient's patch count is not a
/// multiple of the group size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Remainder {
    /// Discard leftover patches (deterministic evaluation tiling).
    Drop,
    /// Fill the last group by resampling from the same patient's patches.
    PadResample,
}

impl Remainder {
    pub fn as_str(self) -> &'static str {
        match self {
            Remainder::Drop => "drop",
            Remainder::PadResample => "pad_resample",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "drop" => Ok(Remainder::Drop),
            "pad_resample" => Ok(Remainder::PadResample),
            other => Err(Error::Parse(format!("unknown remainder policy {other:?}"))),
        }
    }
}

/// How per-patient groups are formed.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupingPolicy {
    pub group_size: usize,
    pub remainder: Remainder,
    /// Re-permute patch order every epoch; when false, groups are identical
    /// for every epoch value.
    pub shuffle_each_epoch: bool,
    pub seed: u64,
}

impl GroupingPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.group_size == 0 {
            return Err(Error::Config("group_size must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// One training/evaluation unit: `group_size` patch embeddings of a single
/// patient concatenated into one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSample {
    pub vector: Vec<f64>,
    pub label: Label,
    pub patient_id: String,
    pub member_patch_ids: Vec<String>,
}

/// Groups plus the patients skipped entirely (fewer patches than the group
/// size under the drop policy) — a warning condition, not an error.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupingOutcome {
    pub groups: Vec<GroupSample>,
    pub skipped_patients: Vec<String>,
}

/// Form groups for one epoch: per patient, permute patch indices when
/// shuffling is on, chunk into consecutive `group_size`-tuples, and handle
/// the remainder per policy.
pub fn make_groups(
    store: &EmbeddingStore,
    policy: &GroupingPolicy,
    epoch: usize,
) -> Result<GroupingOutcome> {
    policy.validate()?;
    store.validate()?;
    let ng = policy.group_size;
    let epoch_key = if policy.shuffle_each_epoch { epoch as u64 } else { 0 };
    let mut groups = Vec::new();
    let mut skipped = Vec::new();
    for patient in &store.patients {
        let n = patient.n_patches();
        let key = StreamKey::new(policy.seed)
            .child_str(&patient.patient_id)
            .child(epoch_key);
        let mut rng = key.rng();
        let mut order: Vec<usize> = (0..n).collect();
        if policy.shuffle_each_epoch {
            shuffle(&mut order, &mut rng);
        }
        if n < ng && policy.remainder == Remainder::Drop {
            skipped.push(patient.patient_id.clone());
            continue;
        }
        let full = n / ng;
        for g in 0..full {
            groups.push(build_group(store.dim, patient, &order[g * ng..(g + 1) * ng]));
        }
        let rem = n % ng;
        if rem > 0 && policy.remainder == Remainder::PadResample {
            let mut members: Vec<usize> = order[full * ng..].to_vec();
            while members.len() < ng {
                members.push(order[rng.gen_range(0..n)]);
            }
            groups.push(build_group(store.dim, patient, &members));
        }
    }
    Ok(GroupingOutcome { groups, skipped_patients: skipped })
}

fn build_group(dim: usize, patient: &PatientEmbeddings, members: &[usize]) -> GroupSample {
    let mut vector = Vec::with_capacity(members.len() * dim);
    let mut ids = Vec::with_capacity(members.len());
    for &i in members {
        vector.extend_from_slice(patient.row(i, dim));
        ids.push(patient.patch_ids[i].clone());
    }
    GroupSample {
        vector,
        label: patient.label,
        patient_id: patient.patient_id.clone(),
        member_patch_ids: ids,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toy_store(counts: &[(&str, Label, usize)], dim: usize) -> EmbeddingStore {
        let patients = counts
            .iter()
            .map(|(pid, label, n)| PatientEmbeddings {
                patient_id: pid.to_string(),
                label: *label,
                patch_ids: (0..*n).map(|i| format!("{pid}_p{i}")).collect(),
                rows: (0..n * dim).map(|i| i as f64).collect(),
            })
            .collect();
        EmbeddingStore { dim, patients, encoder_fingerprint: "test".to_string() }
    }

    #[test]
    fn group_vectors_have_exact_length() {
        let store = toy_store(&[("a", Label::Msi, 8), ("b", Label::Mss, 8)], 16);
        let policy = GroupingPolicy {
            group_size: 4,
            remainder: Remainder::Drop,
            shuffle_each_epoch: false,
            seed: 0,
        };
        let out = make_groups(&store, &policy, 0).unwrap();
        assert_eq!(out.groups.len(), 4);
        for g in &out.groups {
            assert_eq!(g.vector.len(), 4 * 16);
            assert_eq!(g.member_patch_ids.len(), 4);
        }
    }

    #[test]
    fn group_size_one_is_identity() {
        let store = toy_store(&[("a", Label::Msi, 5)], 3);
        let policy = GroupingPolicy {
            group_size: 1,
            remainder: Remainder::Drop,
            shuffle_each_epoch: false,
            seed: 0,
        };
        let out = make_groups(&store, &policy, 0).unwrap();
        assert_eq!(out.groups.len(), 5);
        for (i, g) in out.groups.iter().enumerate() {
            assert_eq!(g.vector, store.patients[0].row(i, 3).to_vec());
            assert_eq!(g.member_patch_ids, vec![format!("a_p{i}")]);
        }
    }

    #[test]
    fn remainder_policies() {
        let store = toy_store(&[("a", Label::Msi, 6)], 2);
        let drop = GroupingPolicy {
            group_size: 4,
            remainder: Remainder::Drop,
            shuffle_each_epoch: false,
            seed: 0,
        };
        let out = make_groups(&store, &drop, 0).unwrap();
        assert_eq!(out.groups.len(), 1, "6 patches, groups of 4, drop remainder");
        let pad = GroupingPolicy { remainder: Remainder::PadResample, ..drop };
        let out = make_groups(&store, &pad, 0).unwrap();
        assert_eq!(out.groups.len(), 2);
        assert_eq!(out.groups[1].member_patch_ids.len(), 4);
        // the second group starts with the two leftover patches
        assert_eq!(out.groups[1].member_patch_ids[0], "a_p4");
        assert_eq!(out.groups[1].member_patch_ids[1], "a_p5");
    }

    #[test]
    fn small_patient_skipped_under_drop_with_warning() {
        let store = toy_store(&[("tiny", Label::Mss, 2), ("big", Label::Msi, 4)], 2);
        let policy = GroupingPolicy {
            group_size: 4,
            remainder: Remainder::Drop,
            shuffle_each_epoch: false,
            seed: 0,
        };
        let out = make_groups(&store, &policy, 0).unwrap();
        assert_eq!(out.skipped_patients, vec!["tiny".to_string()]);
        assert_eq!(out.groups.len(), 1);
    }

    #[test]
    fn small_patient_padded_under_resample() {
        let store = toy_store(&[("tiny", Label::Mss, 2)], 2);
        let policy = GroupingPolicy {
            group_size: 4,
            remainder: Remainder::PadResample,
            shuffle_each_epoch: false,
            seed: 0,
        };
        let out = make_groups(&store, &policy, 0).unwrap();
        assert!(out.skipped_patients.is_empty());
        assert_eq!(out.groups.len(), 1);
        assert_eq!(out.groups[0].member_patch_ids.len(), 4);
    }

    #[test]
    fn groups_never_mix_patients() {
        let store = toy_store(
            &[("a", Label::Msi, 7), ("b", Label::Mss, 9), ("c", Label::Msi, 4)],
            4,
        );
        let policy = GroupingPolicy {
            group_size: 3,
            remainder: Remainder::PadResample,
            shuffle_each_epoch: true,
            seed: 9,
        };
        for epoch in 0..4 {
            let out = make_groups(&store, &policy, epoch).unwrap();
            for g in &out.groups {
                for pid in &g.member_patch_ids {
                    assert!(pid.starts_with(&g.patient_id));
                }
            }
        }
    }

    #[test]
    fn drop_policy_uses_each_patch_at_most_once() {
        let store = toy_store(&[("a", Label::Msi, 10)], 2);
        let policy = GroupingPolicy {
            group_size: 3,
            remainder: Remainder::Drop,
            shuffle_each_epoch: true,
            seed: 4,
        };
        let out = make_groups(&store, &policy, 2).unwrap();
        let mut seen = alloc::collections::BTreeSet::new();
        for g in &out.groups {
            for pid in &g.member_patch_ids {
                assert!(seen.insert(pid.clone()), "{pid} appeared twice");
            }
        }
        assert_eq!(out.groups.len(), 3, "10 patches in groups of 3, drop 1");
    }

    #[test]
    fn shuffle_off_is_epoch_invariant() {
        let store = toy_store(&[("a", Label::Msi, 9)], 2);
        let policy = GroupingPolicy {
            group_size: 4,
            remainder: Remainder::PadResample,
            shuffle_each_epoch: false,
            seed: 1,
        };
        let e0 = make_groups(&store, &policy, 0).unwrap();
        let e7 = make_groups(&store, &policy, 7).unwrap();
        assert_eq!(e0, e7);
        let on = GroupingPolicy { shuffle_each_epoch: true, ..policy };
        let s0 = make_groups(&store, &on, 0).unwrap();
        let s1 = make_groups(&store, &on, 1).unwrap();
        assert_ne!(s0, s1, "shuffling should change group composition");
    }
}
