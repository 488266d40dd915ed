//! Evaluation reports and multi-run summaries as structured JSON, plus the
//! two-column text files for curves and the per-unit prediction table.

use std::path::Path;

use serde::{Deserialize, Serialize};

use patchgroup_core::metrics::{
    EvalReport, MeanStd, MetricComparison, MultiRunSummary, PairedTTest, RocPoint,
};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocPointJson {
    pub fpr: f64,
    pub tpr: f64,
    /// Stored as a string so the +inf corner survives JSON.
    pub threshold: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReportJson {
    pub run_seed: u64,
    pub method: String,
    pub balanced: bool,
    pub n_patients: usize,
    pub n_patches: usize,
    pub patch_accuracy: f64,
    pub patient_accuracy: f64,
    pub patch_auc: f64,
    pub patient_auc: f64,
    pub roc_patch: Vec<RocPointJson>,
    pub roc_patient: Vec<RocPointJson>,
}

fn roc_to_json(points: &[RocPoint]) -> Vec<RocPointJson> {
    points
        .iter()
        .map(|p| RocPointJson {
            fpr: p.fpr,
            tpr: p.tpr,
            threshold: if p.threshold.is_finite() {
                format!("{:.17}", p.threshold)
            } else {
                "inf".to_string()
            },
        })
        .collect()
}

fn roc_from_json(points: &[RocPointJson]) -> Vec<RocPoint> {
    points
        .iter()
        .map(|p| RocPoint {
            fpr: p.fpr,
            tpr: p.tpr,
            threshold: if p.threshold == "inf" {
                f64::INFINITY
            } else {
                p.threshold.parse().unwrap_or(f64::NAN)
            },
        })
        .collect()
}

pub fn report_to_json(report: &EvalReport, method: &str, balanced: bool) -> EvalReportJson {
    EvalReportJson {
        run_seed: report.run_seed,
        method: method.to_string(),
        balanced,
        n_patients: report.n_patients,
        n_patches: report.n_patches,
        patch_accuracy: report.a_patch,
        patient_accuracy: report.a_patient,
        patch_auc: report.auc_patch,
        patient_auc: report.auc_patient,
        roc_patch: roc_to_json(&report.roc_patch),
        roc_patient: roc_to_json(&report.roc_patient),
    }
}

pub fn report_from_json(j: &EvalReportJson) -> EvalReport {
    EvalReport {
        run_seed: j.run_seed,
        n_patients: j.n_patients,
        n_patches: j.n_patches,
        a_patch: j.patch_accuracy,
        a_patient: j.patient_accuracy,
        auc_patch: j.patch_auc,
        auc_patient: j.patient_auc,
        roc_patch: roc_from_json(&j.roc_patch),
        roc_patient: roc_from_json(&j.roc_patient),
    }
}

pub fn save_report(path: &Path, report: &EvalReportJson) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir.display().to_string()))?;
    }
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::Format(format!("report serialization: {e}")))?;
    std::fs::write(path, text).map_err(CliError::io(path.display().to_string()))?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<EvalReportJson> {
    let text =
        std::fs::read_to_string(path).map_err(CliError::io(path.display().to_string()))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Multi-run summaries
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanStdJson {
    pub mean: f64,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TTestJson {
    Ok { t: f64, df: usize, p: f64 },
    InfiniteT { positive: bool, df: usize },
    Undefined { df: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricComparisonJson {
    pub metric: String,
    pub a: MeanStdJson,
    pub b: MeanStdJson,
    pub paired_t: Option<TTestJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryJson {
    pub label_a: String,
    pub label_b: String,
    pub n_runs: usize,
    pub metrics: Vec<MetricComparisonJson>,
}

fn ms_json(m: &MeanStd) -> MeanStdJson {
    MeanStdJson { mean: m.mean, std: m.std }
}

fn test_json(t: &PairedTTest) -> TTestJson {
    match *t {
        PairedTTest::Ok { t, df, p } => TTestJson::Ok { t, df, p },
        PairedTTest::InfiniteT { positive, df } => TTestJson::InfiniteT { positive, df },
        PairedTTest::Undefined { df } => TTestJson::Undefined { df },
    }
}

pub fn summary_to_json(s: &MultiRunSummary) -> SummaryJson {
    SummaryJson {
        label_a: s.label_a.clone(),
        label_b: s.label_b.clone(),
        n_runs: s.n_runs,
        metrics: s
            .metrics
            .iter()
            .map(|m: &MetricComparison| MetricComparisonJson {
                metric: m.name.clone(),
                a: ms_json(&m.a),
                b: ms_json(&m.b),
                paired_t: m.test.as_ref().map(test_json),
            })
            .collect(),
    }
}

pub fn save_summary(path: &Path, summary: &SummaryJson) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir.display().to_string()))?;
    }
    let text = serde_json::to_string_pretty(summary)
        .map_err(|e| CliError::Format(format!("summary serialization: {e}")))?;
    std::fs::write(path, text).map_err(CliError::io(path.display().to_string()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Two-column text files and prediction tables
// ---------------------------------------------------------------------------

/// `x<TAB>y` pairs, one per line, with a `# name` comment up top.
pub fn save_curve(path: &Path, name: &str, points: &[(f64, f64)]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir.display().to_string()))?;
    }
    let mut text = format!("# {name}\n");
    for (x, y) in points {
        text.push_str(&format!("{x}\t{y}\n"));
    }
    std::fs::write(path, text).map_err(CliError::io(path.display().to_string()))?;
    Ok(())
}

/// Per-epoch series saved as (epoch, value) pairs.
pub fn save_series(path: &Path, name: &str, values: &[f64]) -> Result<()> {
    let points: Vec<(f64, f64)> =
        values.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect();
    save_curve(path, name, &points)
}

pub fn load_curve(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text =
        std::fs::read_to_string(path).map_err(CliError::io(path.display().to_string()))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut f = line.split_whitespace();
        match (f.next().and_then(|v| v.parse().ok()), f.next().and_then(|v| v.parse().ok())) {
            (Some(x), Some(y)) => out.push((x, y)),
            _ => {
                return Err(CliError::Format(format!(
                    "{}:{}: expected two numeric columns",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    Ok(out)
}

/// Line-oriented prediction table: `unit_id<TAB>patient_id<TAB>p_msi`.
pub fn save_predictions(path: &Path, rows: &[(String, String, f64)]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir.display().to_string()))?;
    }
    let mut text = String::from("unit_id\tpatient_id\tp_msi\n");
    for (unit, patient, p) in rows {
        text.push_str(&format!("{unit}\t{patient}\t{p}\n"));
    }
    std::fs::write(path, text).map_err(CliError::io(path.display().to_string()))?;
    Ok(())
}
