//! Property sweeps for the aggregation equations and the grouping shape law,
//! including the group-size-one degeneration against the baseline path.

use std::collections::BTreeMap;

use patchgroup_core::aggregate::{
    classify_patient, patch_predictions_from_groups, patient_probability, GroupPrediction,
};
use patchgroup_core::data::Label;
use patchgroup_core::embed::{
    make_groups, EmbeddingStore, GroupingPolicy, PatientEmbeddings, Remainder,
};
use patchgroup_core::rng::StreamKey;
use proptest::prelude::*;
use rand::Rng;

/// 10^4 random sweeps: the patient probability is the arithmetic mean and
/// the boundary decision goes to the positive class.
#[test]
fn mean_and_threshold_sweep() {
    let mut rng = StreamKey::new(42).rng();
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=40usize);
        let probs: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let p = patient_probability(&probs).unwrap();
        // independent mean
        let mut sum = 0.0;
        for &x in &probs {
            sum += x;
        }
        assert_eq!(p, sum / n as f64);
        assert!((0.0..=1.0).contains(&p));

        let t: f64 = rng.gen();
        let decision = classify_patient(p, t);
        assert_eq!(decision == Label::Msi, p >= t);
        // boundary case is inclusive
        assert_eq!(classify_patient(t, t), Label::Msi);
    }
}

/// Eq. 1 linearity: mean(concat(A,B)) * (|A|+|B|) == sum A + sum B.
#[test]
fn mean_is_linear_over_concatenation() {
    let mut rng = StreamKey::new(43).rng();
    for _ in 0..10_000 {
        let na = rng.gen_range(1..=20usize);
        let nb = rng.gen_range(1..=20usize);
        let a: Vec<f64> = (0..na).map(|_| rng.gen()).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.gen()).collect();
        let mut both = a.clone();
        both.extend_from_slice(&b);
        let lhs = patient_probability(&both).unwrap() * (na + nb) as f64;
        let rhs: f64 = a.iter().sum::<f64>() + b.iter().sum::<f64>();
        assert!((lhs - rhs).abs() <= 1e-9);
    }
}

/// Threshold monotonicity: raising t can only shrink the MSI set.
#[test]
fn threshold_monotonicity() {
    let mut rng = StreamKey::new(44).rng();
    for _ in 0..10_000 {
        let p: f64 = rng.gen();
        let t1: f64 = rng.gen();
        let t2: f64 = rng.gen();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        if classify_patient(p, hi) == Label::Msi {
            assert_eq!(classify_patient(p, lo), Label::Msi);
        }
        // exact flip point at p
        assert_eq!(classify_patient(p, p), Label::Msi);
        let above = (p + 1e-9).min(1.0);
        if above > p {
            assert_eq!(classify_patient(p, above), Label::Mss);
        }
    }
}

fn store_from_counts(counts: &[usize], dim: usize, seed: u64) -> EmbeddingStore {
    let mut rng = StreamKey::new(seed).rng();
    let patients = counts
        .iter()
        .enumerate()
        .map(|(i, &n)| PatientEmbeddings {
            patient_id: format!("p{i:03}"),
            label: if i % 2 == 0 { Label::Mss } else { Label::Msi },
            patch_ids: (0..n).map(|k| format!("p{i:03}_k{k:03}")).collect(),
            rows: (0..n * dim).map(|_| rng.gen::<f64>()).collect(),
        })
        .collect();
    EmbeddingStore { dim, patients, encoder_fingerprint: "prop".into() }
}

proptest! {
    /// Shape law: every group vector has length n_g * n_o, members belong to
    /// the group's patient, and the label matches.
    #[test]
    fn group_shape_law(
        ng in 1usize..8,
        dim in 1usize..64,
        counts in prop::collection::vec(1usize..24, 1..8),
        epoch in 0usize..4,
        shuffle in any::<bool>(),
        pad in any::<bool>(),
    ) {
        let store = store_from_counts(&counts, dim, 7);
        let policy = GroupingPolicy {
            group_size: ng,
            remainder: if pad { Remainder::PadResample } else { Remainder::Drop },
            shuffle_each_epoch: shuffle,
            seed: 5,
        };
        let out = make_groups(&store, &policy, epoch).unwrap();
        for g in &out.groups {
            prop_assert_eq!(g.vector.len(), ng * dim);
            prop_assert_eq!(g.member_patch_ids.len(), ng);
            for pid in &g.member_patch_ids {
                prop_assert!(pid.starts_with(&g.patient_id));
            }
            let patient = store.patients.iter().find(|p| p.patient_id == g.patient_id).unwrap();
            prop_assert_eq!(patient.label, g.label);
        }
        // Under drop policy each patch appears at most once per epoch.
        if !pad {
            let mut seen = std::collections::BTreeSet::new();
            for g in &out.groups {
                for pid in &g.member_patch_ids {
                    prop_assert!(seen.insert(pid.clone()));
                }
            }
        }
    }
}

/// Group size one must reproduce the baseline aggregation path bit for bit
/// when both consume identical per-patch probabilities.
#[test]
fn group_size_one_degenerates_to_baseline_path() {
    let mut rng = StreamKey::new(45).rng();
    for _ in 0..10_000 {
        let n_patients = rng.gen_range(1..=6usize);
        let mut baseline_pw = Vec::new();
        let mut groups = Vec::new();
        let mut patient_probs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for p in 0..n_patients {
            let pid = format!("pat{p:02}");
            let n = rng.gen_range(1..=12usize);
            let probs: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            // baseline path: Eq. 1 over the per-patch probabilities
            baseline_pw.push((pid.clone(), patient_probability(&probs).unwrap()));
            // grouped path with n_g = 1: one singleton group per patch
            for (k, &pr) in probs.iter().enumerate() {
                groups.push(GroupPrediction {
                    patient_id: pid.clone(),
                    member_patch_ids: vec![format!("{pid}_k{k:02}")],
                    p_msi: pr,
                });
            }
            patient_probs.insert(pid, probs);
        }
        // extrapolate to patches, regroup by patient, aggregate
        let patches = patch_predictions_from_groups(&groups);
        let mut grouped: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for pp in &patches {
            grouped.entry(pp.patient_id.clone()).or_default().push(pp.p_msi);
        }
        for (pid, want) in &baseline_pw {
            let got = patient_probability(&grouped[pid]).unwrap();
            // bit-for-bit: identical inputs in identical order
            assert_eq!(got.to_bits(), want.to_bits(), "patient {pid}");
            let t: f64 = rng.gen();
            assert_eq!(classify_patient(got, t), classify_patient(*want, t));
        }
    }
}

proptest! {
    /// patch extrapolation: a patch in one group inherits exactly; a patch in
    /// two groups gets the mean.
    #[test]
    fn extrapolation_mean_rule(p1 in 0.0f64..1.0, p2 in 0.0f64..1.0) {
        let groups = vec![
            GroupPrediction {
                patient_id: "a".into(),
                member_patch_ids: vec!["a_x".into(), "a_y".into()],
                p_msi: p1,
            },
            GroupPrediction {
                patient_id: "a".into(),
                member_patch_ids: vec!["a_y".into()],
                p_msi: p2,
            },
        ];
        let patches = patch_predictions_from_groups(&groups);
        let x = patches.iter().find(|p| p.patch_id == "a_x").unwrap();
        let y = patches.iter().find(|p| p.patch_id == "a_y").unwrap();
        prop_assert_eq!(x.p_msi, p1);
        prop_assert!((y.p_msi - (p1 + p2) / 2.0).abs() < 1e-15);
    }
}
