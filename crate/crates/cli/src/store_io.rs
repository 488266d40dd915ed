//! Embedding store persistence: a raw little-endian f32 matrix next to a
//! plain-text index, so external tools can memory-map the matrix and read
//! the index with nothing but a text parser.
//!
//! `store.bin`: rows * dim f32 LE values, row-major.
//! `store.idx`: `# key=value` header lines (version, dim, rows,
//! fingerprint), then one `row<TAB>patient_id<TAB>label<TAB>patch_id` line
//! per embedding row, in row order.

use std::io::{BufRead, Write};
use std::path::Path;

use patchgroup_core::data::Label;
use patchgroup_core::embed::{EmbeddingStore, PatientEmbeddings};
use patchgroup_core::Error as CoreError;

use crate::error::{CliError, Result};

pub const STORE_VERSION: u32 = 1;

pub fn save_store(store: &EmbeddingStore, bin_path: &Path, idx_path: &Path) -> Result<()> {
    if let Some(dir) = bin_path.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir.display().to_string()))?;
    }
    store.validate()?;
    let mut bin = std::io::BufWriter::new(
        std::fs::File::create(bin_path).map_err(CliError::io(bin_path.display().to_string()))?,
    );
    let mut idx = std::io::BufWriter::new(
        std::fs::File::create(idx_path).map_err(CliError::io(idx_path.display().to_string()))?,
    );
    let io_b = |e: std::io::Error| CliError::Io { path: bin_path.display().to_string(), source: e };
    let io_i = |e: std::io::Error| CliError::Io { path: idx_path.display().to_string(), source: e };

    writeln!(idx, "# patchgroup embedding store v{STORE_VERSION}").map_err(io_i)?;
    writeln!(idx, "# dim={}", store.dim).map_err(io_i)?;
    writeln!(idx, "# rows={}", store.total_rows()).map_err(io_i)?;
    writeln!(idx, "# fingerprint={}", store.encoder_fingerprint).map_err(io_i)?;
    writeln!(idx, "row\tpatient_id\tlabel\tpatch_id").map_err(io_i)?;
    let mut row = 0usize;
    for p in &store.patients {
        for (i, patch_id) in p.patch_ids.iter().enumerate() {
            writeln!(idx, "{row}\t{}\t{}\t{}", p.patient_id, p.label, patch_id).map_err(io_i)?;
            for v in p.row(i, store.dim) {
                bin.write_all(&(*v as f32).to_le_bytes()).map_err(io_b)?;
            }
            row += 1;
        }
    }
    bin.flush().map_err(io_b)?;
    idx.flush().map_err(io_i)?;
    Ok(())
}

pub fn load_store(bin_path: &Path, idx_path: &Path) -> Result<EmbeddingStore> {
    let idx_file = std::fs::File::open(idx_path)
        .map_err(CliError::io(idx_path.display().to_string()))?;
    let mut dim: Option<usize> = None;
    let mut rows: Option<usize> = None;
    let mut fingerprint = String::new();
    let mut entries: Vec<(usize, String, Label, String)> = Vec::new();
    let mut header_seen = false;
    for (lineno, line) in std::io::BufReader::new(idx_file).lines().enumerate() {
        let line = line.map_err(CliError::io(idx_path.display().to_string()))?;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("dim=") {
                dim = v.parse().ok();
            } else if let Some(v) = rest.strip_prefix("rows=") {
                rows = v.parse().ok();
            } else if let Some(v) = rest.strip_prefix("fingerprint=") {
                fingerprint = v.to_string();
            }
            continue;
        }
        if !header_seen {
            header_seen = true; // column header line
            continue;
        }
        let mut f = line.split('\t');
        match (f.next(), f.next(), f.next(), f.next()) {
            (Some(r), Some(pid), Some(label), Some(patch)) => {
                let r: usize = r.parse().map_err(|_| {
                    CliError::Format(format!("{}:{}: bad row index", idx_path.display(), lineno + 1))
                })?;
                entries.push((r, pid.to_string(), Label::parse(label)?, patch.to_string()));
            }
            _ => {
                return Err(CliError::Format(format!(
                    "{}:{}: expected 4 tab-separated fields",
                    idx_path.display(),
                    lineno + 1
                )))
            }
        }
    }
    let dim = dim.ok_or_else(|| {
        CliError::Format(format!("{}: missing `# dim=` header", idx_path.display()))
    })?;
    let expected_rows = rows.ok_or_else(|| {
        CliError::Format(format!("{}: missing `# rows=` header", idx_path.display()))
    })?;
    if entries.len() != expected_rows {
        return Err(CliError::Core(CoreError::Integrity(format!(
            "{}: index lists {} rows, header says {expected_rows}",
            idx_path.display(),
            entries.len()
        ))));
    }

    let raw = std::fs::read(bin_path).map_err(CliError::io(bin_path.display().to_string()))?;
    if raw.len() != expected_rows * dim * 4 {
        return Err(CliError::Core(CoreError::Integrity(format!(
            "{}: {} bytes, expected {} ({} rows x dim {dim} x 4)",
            bin_path.display(),
            raw.len(),
            expected_rows * dim * 4,
            expected_rows
        ))));
    }
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();

    // rows must arrive in order and group contiguously by patient
    let mut patients: Vec<PatientEmbeddings> = Vec::new();
    for (i, (row, pid, label, patch_id)) in entries.into_iter().enumerate() {
        if row != i {
            return Err(CliError::Core(CoreError::Integrity(format!(
                "{}: row indices out of order at {row}",
                idx_path.display()
            ))));
        }
        let need_new = patients.last().map_or(true, |p| p.patient_id != pid);
        if need_new {
            if patients.iter().any(|p| p.patient_id == pid) {
                return Err(CliError::Core(CoreError::Integrity(format!(
                    "{}: patient {pid} appears in two separate blocks",
                    idx_path.display()
                ))));
            }
            patients.push(PatientEmbeddings {
                patient_id: pid,
                label,
                patch_ids: Vec::new(),
                rows: Vec::new(),
            });
        }
        let p = patients.last_mut().unwrap();
        if p.label != label {
            return Err(CliError::Core(CoreError::Integrity(format!(
                "{}: label flip within patient {}",
                idx_path.display(),
                p.patient_id
            ))));
        }
        p.patch_ids.push(patch_id);
        p.rows.extend_from_slice(&values[i * dim..(i + 1) * dim]);
    }
    let store = EmbeddingStore { dim, patients, encoder_fingerprint: fingerprint };
    store.validate()?;
    Ok(store)
}
