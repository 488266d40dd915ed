//! Evaluation: accuracies, ROC/AUC, paired t-tests, multi-run summaries.
//!
//! AUC follows the Mann-Whitney convention (ties count one half), computed
//! exactly from integer counts along the ROC sweep. The t-distribution tail
//! comes from the regularized incomplete beta function evaluated by
//! continued fraction.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::aggregate::{
    classify_patient, AggregationMethod, PatchProbability, PatientPrediction,
};
use crate::data::Label;
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Accuracy
// ---------------------------------------------------------------------------

/// Fraction of `(score, truth)` pairs whose thresholded prediction matches.
pub fn accuracy(scored: &[(f64, Label)], threshold: f64) -> Result<f64> {
    if scored.is_empty() {
        return Err(Error::Domain("accuracy over an empty set".to_string()));
    }
    let correct = scored
        .iter()
        .filter(|(p, truth)| classify_patient(*p, threshold) == *truth)
        .count();
    Ok(correct as f64 / scored.len() as f64)
}

/// Patch-level accuracy; labels are looked up by patient id (inheritance).
pub fn patch_accuracy(
    predictions: &[PatchProbability],
    patient_labels: &BTreeMap<String, Label>,
    threshold: f64,
) -> Result<f64> {
    let scored = patch_scores(predictions, patient_labels)?;
    accuracy(&scored, threshold)
}

/// Patient-level accuracy from already-made decisions.
pub fn patient_accuracy(
    predictions: &[PatientPrediction],
    patient_labels: &BTreeMap<String, Label>,
) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Domain("accuracy over an empty set".to_string()));
    }
    let mut correct = 0usize;
    for p in predictions {
        let truth = patient_labels.get(&p.patient_id).ok_or_else(|| {
            Error::Consistency(format!("no label for patient {:?}", p.patient_id))
        })?;
        if p.decision == *truth {
            correct += 1;
        }
    }
    Ok(correct as f64 / predictions.len() as f64)
}

fn patch_scores(
    predictions: &[PatchProbability],
    patient_labels: &BTreeMap<String, Label>,
) -> Result<Vec<(f64, Label)>> {
    predictions
        .iter()
        .map(|p| {
            patient_labels
                .get(&p.patient_id)
                .map(|&l| (p.p_msi, l))
                .ok_or_else(|| {
                    Error::Consistency(format!("no label for patient {:?}", p.patient_id))
                })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// ROC / AUC
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Predict MSI iff score >= threshold; the (0,0) corner carries +inf.
    pub threshold: f64,
}

/// ROC sweep over all distinct score thresholds plus the Mann-Whitney AUC
/// (ties one half). Scores must be finite and both classes present.
pub fn roc_auc(scored: &[(f64, Label)]) -> Result<(Vec<RocPoint>, f64)> {
    let pos_total = scored.iter().filter(|(_, l)| *l == Label::Msi).count() as u64;
    let neg_total = scored.len() as u64 - pos_total;
    if pos_total == 0 || neg_total == 0 {
        return Err(Error::Domain(format!(
            "ROC needs both classes, got {pos_total} MSI and {neg_total} MSS"
        )));
    }
    if scored.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::Domain("ROC scores must be finite".to_string()));
    }

    let mut sorted: Vec<(f64, Label)> = scored.to_vec();
    // Descending by score; total order is safe, finiteness checked above.
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let mut points = Vec::with_capacity(sorted.len() + 1);
    points.push(RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY });

    // Trapezoid area accumulated exactly on integer counts:
    // 2 * area * P * N = sum over segments of d_fp * (tp_prev + tp_cur)
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut area2: u64 = 0;
    let mut i = 0usize;
    while i < sorted.len() {
        let thr = sorted[i].0;
        let (tp_prev, fp_prev) = (tp, fp);
        while i < sorted.len() && sorted[i].0 == thr {
            match sorted[i].1 {
                Label::Msi => tp += 1,
                Label::Mss => fp += 1,
            }
            i += 1;
        }
        area2 += (fp - fp_prev) * (tp_prev + tp);
        points.push(RocPoint {
            fpr: fp as f64 / neg_total as f64,
            tpr: tp as f64 / pos_total as f64,
            threshold: thr,
        });
    }
    let auc = area2 as f64 / (2.0 * pos_total as f64 * neg_total as f64);
    Ok((points, auc))
}

// ---------------------------------------------------------------------------
// Student t machinery
// ---------------------------------------------------------------------------

/// ln Gamma via the Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        let pi = core::f64::consts::PI;
        return libm::log(pi / libm::sin(pi * x)) - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + G + 0.5;
    0.5 * libm::log(2.0 * core::f64::consts::PI) + (z + 0.5) * libm::log(t) - t
        + libm::log(acc)
}

/// Continued fraction for the incomplete beta (Lentz's method).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_IT: usize = 300;
    const EPS: f64 = 1e-15;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_IT {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn betai(a: f64, b: f64, x: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x));
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let bt = libm::exp(
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
            + a * libm::log(x)
            + b * libm::log(1.0 - x),
    );
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * betacf(a, b, x) / a
    } else {
        1.0 - bt * betacf(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: usize) -> f64 {
    let v = df as f64;
    betai(0.5 * v, 0.5, v / (v + t * t))
}

/// Result of a paired t-test on per-run metric differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairedTTest {
    Ok {
        t: f64,
        df: usize,
        p: f64,
    },
    /// All differences identical and nonzero: |t| is unbounded, p -> 0.
    InfiniteT {
        positive: bool,
        df: usize,
    },
    /// All differences exactly zero: t is undefined.
    Undefined {
        df: usize,
    },
}

/// Paired two-sided t-test on differences `a[i] - b[i]`, pairs in run order.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::Pairing(format!(
            "paired test needs equal-length runs, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Domain("paired test needs at least 2 runs".to_string()));
    }
    let d: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            PairedTTest::Undefined { df }
        } else {
            PairedTTest::InfiniteT { positive: mean > 0.0, df }
        });
    }
    let t = mean / libm::sqrt(var / n as f64);
    Ok(PairedTTest::Ok { t, df, p: student_t_two_sided_p(t, df) })
}

// ---------------------------------------------------------------------------
// Reports and multi-run summaries
// ---------------------------------------------------------------------------

/// Everything one evaluation run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub run_seed: u64,
    pub n_patients: usize,
    pub n_patches: usize,
    pub a_patch: f64,
    pub a_patient: f64,
    pub auc_patch: f64,
    pub auc_patient: f64,
    pub roc_patch: Vec<RocPoint>,
    pub roc_patient: Vec<RocPoint>,
}

/// Evaluate one run from per-patch probabilities and per-patient unit
/// probability lists. Patch truth labels are inherited from the patient.
pub fn evaluate_run(
    patch_probs: &[PatchProbability],
    patient_unit_probs: &BTreeMap<String, Vec<f64>>,
    patient_labels: &BTreeMap<String, Label>,
    threshold: f64,
    method: AggregationMethod,
    run_seed: u64,
) -> Result<EvalReport> {
    let mut patient_preds = Vec::with_capacity(patient_unit_probs.len());
    for (pid, units) in patient_unit_probs {
        patient_preds.push(crate::aggregate::predict_patient(pid, units, threshold, method)?);
    }
    let a_patient = patient_accuracy(&patient_preds, patient_labels)?;
    let patient_scored: Vec<(f64, Label)> = patient_preds
        .iter()
        .map(|p| (p.p_msi, patient_labels[&p.patient_id]))
        .collect();
    let (roc_patient, auc_patient) = roc_auc(&patient_scored)?;

    let patch_scored = patch_scores(patch_probs, patient_labels)?;
    let a_patch = accuracy(&patch_scored, threshold)?;
    let (roc_patch, auc_patch) = roc_auc(&patch_scored)?;

    Ok(EvalReport {
        run_seed,
        n_patients: patient_preds.len(),
        n_patches: patch_probs.len(),
        a_patch,
        a_patient,
        auc_patch,
        auc_patient,
        roc_patch,
        roc_patient,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample (n-1) standard deviation; `None` for a single run.
    pub std: Option<f64>,
}

pub fn mean_std(xs: &[f64]) -> Result<MeanStd> {
    if xs.is_empty() {
        return Err(Error::Domain("mean of an empty list".to_string()));
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let std = if xs.len() >= 2 {
        let var =
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
        Some(libm::sqrt(var))
    } else {
        None
    };
    Ok(MeanStd { mean, std })
}

/// One metric compared across two methods.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricComparison {
    pub name: String,
    pub a: MeanStd,
    pub b: MeanStd,
    /// Present when there are at least two paired runs.
    pub test: Option<PairedTTest>,
}

/// Side-by-side multi-run comparison of two methods.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiRunSummary {
    pub label_a: String,
    pub label_b: String,
    pub n_runs: usize,
    pub metrics: Vec<MetricComparison>,
}

/// Summarize paired runs of two methods. Runs are paired by `run_seed`; both
/// sides must contain exactly the same seed multiset.
pub fn summarize_runs(
    a: &[EvalReport],
    b: &[EvalReport],
    label_a: &str,
    label_b: &str,
) -> Result<MultiRunSummary> {
    if a.len() != b.len() {
        return Err(Error::Pairing(format!(
            "run counts differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Domain("no runs to summarize".to_string()));
    }
    let mut a_sorted: Vec<&EvalReport> = a.iter().collect();
    let mut b_sorted: Vec<&EvalReport> = b.iter().collect();
    a_sorted.sort_by_key(|r| r.run_seed);
    b_sorted.sort_by_key(|r| r.run_seed);
    for (x, y) in a_sorted.iter().zip(b_sorted.iter()) {
        if x.run_seed != y.run_seed {
            return Err(Error::Pairing(format!(
                "runs are not paired by seed: {} vs {}",
                x.run_seed, y.run_seed
            )));
        }
    }

    let extractors: [(&str, fn(&EvalReport) -> f64); 4] = [
        ("patient_accuracy", |r| r.a_patient),
        ("patch_accuracy", |r| r.a_patch),
        ("patient_auc", |r| r.auc_patient),
        ("patch_auc", |r| r.auc_patch),
    ];
    let n_runs = a.len();
    let mut metrics = Vec::new();
    for (name, get) in extractors {
        let xs: Vec<f64> = a_sorted.iter().map(|r| get(r)).collect();
        let ys: Vec<f64> = b_sorted.iter().map(|r| get(r)).collect();
        let test = if n_runs >= 2 {
            Some(paired_t_test(&xs, &ys)?)
        } else {
            None
        };
        metrics.push(MetricComparison {
            name: name.to_string(),
            a: mean_std(&xs)?,
            b: mean_std(&ys)?,
            test,
        });
    }
    Ok(MultiRunSummary {
        label_a: label_a.to_string(),
        label_b: label_b.to_string(),
        n_runs,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn accuracy_counts() {
        let scored: Vec<(f64, Label)> = (0..10)
            .map(|i| {
                // 8 of 10 correct at t = 0.5
                if i < 8 {
                    (0.9, Label::Msi)
                } else {
                    (0.9, Label::Mss)
                }
            })
            .collect();
        assert_eq!(accuracy(&scored, 0.5).unwrap(), 0.8);
        assert_eq!(accuracy(&[(0.9, Label::Msi)], 0.5).unwrap(), 1.0);
        // probabilities {0.6, 0.4} vs labels {MSI, MSI}
        let half = vec![(0.6, Label::Msi), (0.4, Label::Msi)];
        assert_eq!(accuracy(&half, 0.5).unwrap(), 0.5);
        assert!(accuracy(&[], 0.5).is_err());
    }

    #[test]
    fn roc_handles_separation_and_ties() {
        let perfect = vec![
            (0.9, Label::Msi),
            (0.8, Label::Msi),
            (0.2, Label::Mss),
            (0.1, Label::Mss),
        ];
        let (_, auc) = roc_auc(&perfect).unwrap();
        assert_eq!(auc, 1.0);

        let ties = vec![(0.5, Label::Msi), (0.5, Label::Mss), (0.5, Label::Msi)];
        let (_, auc) = roc_auc(&ties).unwrap();
        assert_eq!(auc, 0.5);

        // MSI {0.9, 0.6}, MSS {0.7, 0.2}: 3 wins of 4 pairs
        let mixed = vec![
            (0.9, Label::Msi),
            (0.6, Label::Msi),
            (0.7, Label::Mss),
            (0.2, Label::Mss),
        ];
        let (points, auc) = roc_auc(&mixed).unwrap();
        assert_eq!(auc, 0.75);
        assert_eq!(points.first().unwrap().fpr, 0.0);
        assert_eq!(points.first().unwrap().tpr, 0.0);
        assert_eq!(points.last().unwrap().fpr, 1.0);
        assert_eq!(points.last().unwrap().tpr, 1.0);
    }

    #[test]
    fn roc_rejects_single_class() {
        let one = vec![(0.5, Label::Msi)];
        assert!(matches!(roc_auc(&one), Err(Error::Domain(_))));
    }

    #[test]
    fn t_test_hand_case() {
        // d = {0.1, 0.2, 0.0}: t = sqrt(3), df = 2
        let a = [0.2, 0.4, 0.3];
        let b = [0.1, 0.2, 0.3];
        match paired_t_test(&a, &b).unwrap() {
            PairedTTest::Ok { t, df, p } => {
                assert!((t - libm::sqrt(3.0)).abs() < 1e-12, "t = {t}");
                assert_eq!(df, 2);
                // closed form for df=2: p = 1 - t/sqrt(t^2+2)
                let expect = 1.0 - libm::sqrt(3.0) / libm::sqrt(5.0);
                assert!((p - expect).abs() < 1e-12, "p = {p}, expect {expect}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn t_test_degenerate_cases() {
        let a = [0.5, 0.6, 0.7];
        assert!(matches!(
            paired_t_test(&a, &a).unwrap(),
            PairedTTest::Undefined { df: 2 }
        ));
        let b = [0.4, 0.5, 0.6];
        assert!(matches!(
            paired_t_test(&a, &b).unwrap(),
            PairedTTest::InfiniteT { positive: true, df: 2 }
        ));
        assert!(paired_t_test(&[1.0], &[2.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn mean_std_examples() {
        let ms = mean_std(&[0.8, 0.9]).unwrap();
        assert!((ms.mean - 0.85).abs() < 1e-15);
        assert!((ms.std.unwrap() - 0.070710678118654752).abs() < 1e-15);
        let same = mean_std(&[0.4, 0.4, 0.4]).unwrap();
        assert!(same.std.unwrap() < 1e-15);
        assert!(mean_std(&[0.3]).unwrap().std.is_none());
    }

    #[test]
    fn ln_gamma_known_values() {
        // Gamma(5) = 24, Gamma(0.5) = sqrt(pi)
        assert!((ln_gamma(5.0) - libm::log(24.0)).abs() < 1e-12);
        assert!((ln_gamma(0.5) - 0.5 * libm::log(core::f64::consts::PI)).abs() < 1e-12);
    }

    fn report(seed: u64, pat: f64) -> EvalReport {
        EvalReport {
            run_seed: seed,
            n_patients: 4,
            n_patches: 16,
            a_patch: pat - 0.1,
            a_patient: pat,
            auc_patch: pat,
            auc_patient: pat,
            roc_patch: vec![],
            roc_patient: vec![],
        }
    }

    #[test]
    fn summary_pairs_by_seed() {
        let a = vec![report(2, 0.9), report(1, 0.8)];
        let b = vec![report(1, 0.7), report(2, 0.6)];
        let s = summarize_runs(&a, &b, "ours", "baseline").unwrap();
        assert_eq!(s.n_runs, 2);
        let m = &s.metrics[0];
        assert_eq!(m.name, "patient_accuracy");
        assert!((m.a.mean - 0.85).abs() < 1e-15);
        assert!((m.b.mean - 0.65).abs() < 1e-15);
        assert!(m.test.is_some());

        let c = vec![report(3, 0.5), report(1, 0.5)];
        assert!(matches!(
            summarize_runs(&a, &c, "x", "y"),
            Err(Error::Pairing(_))
        ));
        assert!(matches!(
            summarize_runs(&a, &b[..1].to_vec(), "x", "y"),
            Err(Error::Pairing(_))
        ));
    }

    #[test]
    fn single_run_summary_omits_std_and_tests() {
        let s = summarize_runs(&[report(1, 0.9)], &[report(1, 0.8)], "a", "b").unwrap();
        assert_eq!(s.n_runs, 1);
        assert!(s.metrics[0].a.std.is_none());
        assert!(s.metrics[0].test.is_none());
    }
}
