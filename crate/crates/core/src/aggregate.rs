//! Patient-level aggregation of per-unit probabilities.
//!
//! A "unit" is whatever the classifier scored: an individual patch for the
//! baseline, a group of patches for the two-stage method. Units reduce to a
//! patient probability by arithmetic mean and to a decision by threshold,
//! or by majority vote over hard unit labels.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::data::Label;
use crate::error::{Error, Result};

/// Probability that one patch belongs to the positive (MSI) class.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchProbability {
    pub patch_id: String,
    pub patient_id: String,
    pub p_msi: f64,
}

/// How unit predictions are combined into a patient decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMethod {
    /// Mean unit probability, then threshold.
    MeanProb,
    /// Majority vote over thresholded unit labels; ties go to MSI.
    MajorityVote,
}

impl AggregationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AggregationMethod::MeanProb => "mean_prob",
            AggregationMethod::MajorityVote => "majority_vote",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean_prob" => Ok(AggregationMethod::MeanProb),
            "majority_vote" => Ok(AggregationMethod::MajorityVote),
            other => Err(Error::Parse(format!("unknown aggregation method {other:?}"))),
        }
    }
}

/// Final decision for one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientPrediction {
    pub patient_id: String,
    /// Mean unit probability (the patient score, whatever the method).
    pub p_msi: f64,
    pub decision: Label,
    pub threshold: f64,
    pub method: AggregationMethod,
}

/// Mean probability over a patient's scored units.
pub fn patient_probability(unit_probs: &[f64]) -> Result<f64> {
    if unit_probs.is_empty() {
        return Err(Error::Domain(
            "patient has no scored units to aggregate".to_string(),
        ));
    }
    let mut sum = 0.0;
    for &p in unit_probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Contract(format!("unit probability {p} outside [0,1]")));
        }
        sum += p;
    }
    Ok(sum / unit_probs.len() as f64)
}

/// Threshold rule: MSI iff `p_w >= t` (boundary inclusive).
pub fn classify_patient(p_w: f64, t: f64) -> Label {
    if p_w >= t {
        Label::Msi
    } else {
        Label::Mss
    }
}

/// Modal label; ties resolve to MSI (the positive class).
pub fn majority_vote(labels: &[Label]) -> Result<Label> {
    if labels.is_empty() {
        return Err(Error::Domain("majority vote over an empty list".to_string()));
    }
    let msi = labels.iter().filter(|&&l| l == Label::Msi).count();
    let mss = labels.len() - msi;
    Ok(if msi >= mss { Label::Msi } else { Label::Mss })
}

/// Predict one patient from its unit probabilities.
pub fn predict_patient(
    patient_id: &str,
    unit_probs: &[f64],
    threshold: f64,
    method: AggregationMethod,
) -> Result<PatientPrediction> {
    let p_msi = patient_probability(unit_probs)?;
    let decision = match method {
        AggregationMethod::MeanProb => classify_patient(p_msi, threshold),
        AggregationMethod::MajorityVote => {
            let hard: Vec<Label> = unit_probs
                .iter()
                .map(|&p| classify_patient(p, threshold))
                .collect();
            majority_vote(&hard)?
        }
    };
    Ok(PatientPrediction {
        patient_id: patient_id.to_string(),
        p_msi,
        decision,
        threshold,
        method,
    })
}

/// A scored group with enough provenance to extrapolate patch predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPrediction {
    pub patient_id: String,
    pub member_patch_ids: Vec<String>,
    pub p_msi: f64,
}

/// Extrapolate per-patch probabilities from group predictions: every member
/// inherits its group's probability; a patch present in several groups
/// (resampled remainders) gets the mean over its groups. Output is sorted by
/// patch id.
pub fn patch_predictions_from_groups(groups: &[GroupPrediction]) -> Vec<PatchProbability> {
    let mut acc: BTreeMap<&str, (&str, f64, usize)> = BTreeMap::new();
    for g in groups {
        for pid in &g.member_patch_ids {
            let slot = acc.entry(pid).or_insert((&g.patient_id, 0.0, 0));
            slot.1 += g.p_msi;
            slot.2 += 1;
        }
    }
    acc.into_iter()
        .map(|(patch_id, (patient_id, sum, n))| PatchProbability {
            patch_id: patch_id.to_string(),
            patient_id: patient_id.to_string(),
            p_msi: sum / n as f64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn mean_probability_examples() {
        assert_eq!(patient_probability(&[0.2, 0.4, 0.9]).unwrap(), 0.5);
        assert_eq!(patient_probability(&[0.73]).unwrap(), 0.73);
        let p = patient_probability(&[0.3, 0.3, 0.3, 0.3]).unwrap();
        assert!((p - 0.3).abs() < 1e-15);
        assert!(patient_probability(&[]).is_err());
    }

    #[test]
    fn threshold_boundary_goes_to_msi() {
        assert_eq!(classify_patient(0.5, 0.5), Label::Msi);
        assert_eq!(classify_patient(0.0, 0.5), Label::Mss);
        assert_eq!(classify_patient(1.0, 1.0), Label::Msi);
    }

    #[test]
    fn majority_vote_examples() {
        assert_eq!(
            majority_vote(&[Label::Msi, Label::Msi, Label::Mss]).unwrap(),
            Label::Msi
        );
        assert_eq!(
            majority_vote(&[Label::Mss, Label::Mss, Label::Mss]).unwrap(),
            Label::Mss
        );
        // tie rule
        assert_eq!(majority_vote(&[Label::Msi, Label::Mss]).unwrap(), Label::Msi);
        assert!(majority_vote(&[]).is_err());
    }

    #[test]
    fn group_extrapolation() {
        let groups = vec![
            GroupPrediction {
                patient_id: "A".into(),
                member_patch_ids: vec!["p1".into(), "p2".into(), "p3".into(), "p4".into()],
                p_msi: 0.8,
            },
            GroupPrediction {
                patient_id: "A".into(),
                member_patch_ids: vec!["p4".into(), "p5".into()],
                p_msi: 0.6,
            },
        ];
        let patches = patch_predictions_from_groups(&groups);
        assert_eq!(patches.len(), 5);
        let p4 = patches.iter().find(|p| p.patch_id == "p4").unwrap();
        assert!((p4.p_msi - 0.7).abs() < 1e-15, "mean of 0.8 and 0.6");
        let p1 = patches.iter().find(|p| p.patch_id == "p1").unwrap();
        assert_eq!(p1.p_msi, 0.8);
    }

    #[test]
    fn single_member_groups_are_identity() {
        let groups = vec![
            GroupPrediction {
                patient_id: "A".into(),
                member_patch_ids: vec!["p1".into()],
                p_msi: 0.31,
            },
            GroupPrediction {
                patient_id: "A".into(),
                member_patch_ids: vec!["p2".into()],
                p_msi: 0.92,
            },
        ];
        let patches = patch_predictions_from_groups(&groups);
        assert_eq!(patches[0].p_msi, 0.31);
        assert_eq!(patches[1].p_msi, 0.92);
    }

    #[test]
    fn rejects_out_of_range_probability() {
        assert!(patient_probability(&[0.5, 1.2]).is_err());
    }
}
