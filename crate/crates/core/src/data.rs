//! Dataset model: manifests, label inheritance, balanced subsets, and the
//! synthetic planted-texture generator used for desk-scale verification.
//!
//! A dataset is described by a line-oriented manifest (tab-separated, one
//! row per patch) plus a directory of PNG rasters. Parsing and validation
//! here are pure string/struct work; the companion crate does file IO.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::rng::{shuffle, StreamKey};

/// Binary patient status. `Msi` is the positive class everywhere
/// (probabilities, thresholds, ROC).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Mss,
    Msi,
}

impl Label {
    /// Accepts `MSS`, `MSI` and the TCGA-style alias `MSIMUT`,
    /// case-insensitively.
    pub fn parse(s: &str) -> Result<Label> {
        if s.eq_ignore_ascii_case("mss") {
            Ok(Label::Mss)
        } else if s.eq_ignore_ascii_case("msi") || s.eq_ignore_ascii_case("msimut") {
            Ok(Label::Msi)
        } else {
            Err(Error::Parse(format!("unknown label string: {s:?}")))
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Mss => "MSS",
            Label::Msi => "MSI",
        }
    }
}

impl core::fmt::Display for Label {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            other => Err(Error::Parse(format!("unknown split string: {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

/// One manifest row: a single patch of a single patient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub patient_id: String,
    /// Path of the raster, relative to the manifest location, `/`-separated.
    pub patch_path: String,
    /// Inherited from the patient; validation rejects rows that disagree.
    pub label: Label,
    pub split: Split,
}

impl ManifestEntry {
    /// Patch id = file stem of the raster path; must be unique per dataset.
    pub fn patch_id(&self) -> &str {
        let base = self.patch_path.rsplit('/').next().unwrap_or(&self.patch_path);
        base.rsplit_once('.').map_or(base, |(stem, _)| stem)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCount {
    pub patients: usize,
    pub patches: usize,
}

/// Per-split, per-class patient and patch tallies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts {
    pub train_mss: ClassCount,
    pub train_msi: ClassCount,
    pub val_mss: ClassCount,
    pub val_msi: ClassCount,
}

impl ClassCounts {
    pub fn get(&self, split: Split, label: Label) -> ClassCount {
        match (split, label) {
            (Split::Train, Label::Mss) => self.train_mss,
            (Split::Train, Label::Msi) => self.train_msi,
            (Split::Validation, Label::Mss) => self.val_mss,
            (Split::Validation, Label::Msi) => self.val_msi,
        }
    }
}

/// Patient view assembled from a manifest: id, label, split, and the indices
/// of its entries in manifest order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientSummary {
    pub patient_id: String,
    pub label: Label,
    pub split: Split,
    pub entry_indices: Vec<usize>,
}

pub const MANIFEST_HEADER: &str = "patient_id\tpatch_path\tlabel\tsplit";
pub const MANIFEST_VERSION_LINE: &str = "# patchgroup manifest v1";

/// Parsed, validated dataset manifest with recomputed tallies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub patch_size: usize,
    pub entries: Vec<ManifestEntry>,
    pub class_counts: ClassCounts,
}

impl Manifest {
    /// Build from rows, enforcing the dataset invariants: unique patch ids,
    /// one split per patient, one label per patient (inheritance).
    pub fn new(patch_size: usize, entries: Vec<ManifestEntry>) -> Result<Self> {
        if patch_size == 0 {
            return Err(Error::Parse("manifest patch_size must be positive".to_string()));
        }
        let mut seen_patch: BTreeMap<&str, &str> = BTreeMap::new();
        let mut patient_split: BTreeMap<&str, (Split, Label)> = BTreeMap::new();
        for e in &entries {
            let pid = e.patch_id();
            if pid.is_empty() {
                return Err(Error::Parse(format!("empty patch id in path {:?}", e.patch_path)));
            }
            if let Some(owner) = seen_patch.insert(pid, &e.patient_id) {
                return Err(Error::Consistency(format!(
                    "duplicate patch id {pid:?} (patients {owner:?} and {:?})",
                    e.patient_id
                )));
            }
            match patient_split.get(e.patient_id.as_str()) {
                None => {
                    patient_split.insert(&e.patient_id, (e.split, e.label));
                }
                Some(&(split, label)) => {
                    if split != e.split {
                        return Err(Error::Consistency(format!(
                            "patient {:?} listed in two splits",
                            e.patient_id
                        )));
                    }
                    if label != e.label {
                        return Err(Error::Consistency(format!(
                            "patient {:?} carries two labels; patch labels inherit from the patient",
                            e.patient_id
                        )));
                    }
                }
            }
        }
        let class_counts = recount(&entries);
        Ok(Manifest { patch_size, entries, class_counts })
    }

    /// Parse the text form. Lines starting with `#` are metadata/comments;
    /// `# patch_size=N` is required. The column header must match
    /// [`MANIFEST_HEADER`].
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut patch_size: Option<usize> = None;
        let mut header_seen = false;
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("patch_size=") {
                    let v: usize = v.trim().parse().map_err(|_| {
                        Error::Parse(format!("line {}: bad patch_size value {v:?}", lineno + 1))
                    })?;
                    patch_size = Some(v);
                }
                continue;
            }
            if !header_seen {
                if line != MANIFEST_HEADER {
                    return Err(Error::Parse(format!(
                        "line {}: expected header {MANIFEST_HEADER:?}, got {line:?}",
                        lineno + 1
                    )));
                }
                header_seen = true;
                continue;
            }
            let mut fields = line.split('\t');
            let (pid, path, label, split) =
                match (fields.next(), fields.next(), fields.next(), fields.next(), fields.next()) {
                    (Some(a), Some(b), Some(c), Some(d), None) => (a, b, c, d),
                    _ => {
                        return Err(Error::Parse(format!(
                            "line {}: expected 4 tab-separated fields",
                            lineno + 1
                        )))
                    }
                };
            entries.push(ManifestEntry {
                patient_id: pid.to_string(),
                patch_path: path.to_string(),
                label: Label::parse(label)?,
                split: Split::parse(split)?,
            });
        }
        if !header_seen {
            return Err(Error::Parse("manifest has no header line".to_string()));
        }
        let patch_size = patch_size
            .ok_or_else(|| Error::Parse("manifest is missing `# patch_size=N`".to_string()))?;
        Manifest::new(patch_size, entries)
    }

    /// Serialize back to the text form, row order preserved.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(MANIFEST_VERSION_LINE);
        out.push('\n');
        out.push_str(&format!("# patch_size={}\n", self.patch_size));
        out.push_str(MANIFEST_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.patient_id,
                e.patch_path,
                e.label,
                e.split.as_str()
            ));
        }
        out
    }

    /// Recompute tallies from entries (must equal the stored field).
    pub fn recount(&self) -> ClassCounts {
        recount(&self.entries)
    }

    /// Patients grouped from entries, sorted by patient id; per-patient
    /// entry indices keep manifest row order.
    pub fn patients(&self) -> Vec<PatientSummary> {
        let mut by_id: BTreeMap<&str, PatientSummary> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            by_id
                .entry(&e.patient_id)
                .or_insert_with(|| PatientSummary {
                    patient_id: e.patient_id.clone(),
                    label: e.label,
                    split: e.split,
                    entry_indices: Vec::new(),
                })
                .entry_indices
                .push(i);
        }
        by_id.into_values().collect()
    }

    /// Entries of one split, manifest order preserved.
    pub fn split_entries(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }
}

fn recount(entries: &[ManifestEntry]) -> ClassCounts {
    let mut counts = ClassCounts::default();
    let mut patients: BTreeMap<&str, (Split, Label)> = BTreeMap::new();
    for e in entries {
        let slot = match (e.split, e.label) {
            (Split::Train, Label::Mss) => &mut counts.train_mss,
            (Split::Train, Label::Msi) => &mut counts.train_msi,
            (Split::Validation, Label::Mss) => &mut counts.val_mss,
            (Split::Validation, Label::Msi) => &mut counts.val_msi,
        };
        slot.patches += 1;
        patients.entry(&e.patient_id).or_insert((e.split, e.label));
    }
    for (split, label) in patients.values() {
        let slot = match (split, label) {
            (Split::Train, Label::Mss) => &mut counts.train_mss,
            (Split::Train, Label::Msi) => &mut counts.train_msi,
            (Split::Validation, Label::Mss) => &mut counts.val_mss,
            (Split::Validation, Label::Msi) => &mut counts.val_msi,
        };
        slot.patients += 1;
    }
    counts
}

// ---------------------------------------------------------------------------
// In-memory patch sets
// ---------------------------------------------------------------------------

/// A patch with its raster, fully resident in memory.
#[derive(Debug, Clone)]
pub struct PatchItem {
    pub patch_id: String,
    pub patient_id: String,
    pub label: Label,
    pub raster: Raster,
}

/// All patches of one split, in manifest order.
#[derive(Debug, Clone)]
pub struct PatchSet {
    pub patch_size: usize,
    pub items: Vec<PatchItem>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Patient ids in sorted order.
    pub fn patient_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .items
            .iter()
            .map(|p| p.patient_id.clone())
            .collect::<alloc::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        ids.sort();
        ids
    }

    /// Map patient id -> label.
    pub fn patient_labels(&self) -> BTreeMap<String, Label> {
        self.items
            .iter()
            .map(|p| (p.patient_id.clone(), p.label))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Synthetic planted-texture datasets
// ---------------------------------------------------------------------------

/// Configuration of the synthetic dataset generator.
///
/// MSI patients receive `round(signal_fraction * n_patches)` patches carrying
/// an oriented stripe texture; MSS patients receive none. The stripe is a
/// global pattern so it survives crops of half the patch and flips.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub train_patients_per_class: usize,
    pub val_patients_per_class: usize,
    /// Inclusive range for the per-patient patch count.
    pub patches_per_patient: (usize, usize),
    pub patch_size: usize,
    /// Fraction of an MSI patient's patches carrying the texture, in (0,1].
    pub signal_fraction: f64,
    /// Gaussian pixel noise, as a fraction of full scale.
    pub noise_level: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_patients_per_class == 0 || self.val_patients_per_class == 0 {
            return Err(Error::Config("patient counts must be positive".to_string()));
        }
        let (lo, hi) = self.patches_per_patient;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!(
                "patches_per_patient range [{lo},{hi}] must satisfy 1 <= lo <= hi"
            )));
        }
        if self.patch_size < 16 {
            return Err(Error::Config(format!(
                "patch_size {} is degenerate (must be >= 16)",
                self.patch_size
            )));
        }
        if !(self.signal_fraction > 0.0 && self.signal_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "signal_fraction {} must lie in (0,1]",
                self.signal_fraction
            )));
        }
        if !(self.noise_level >= 0.0) {
            return Err(Error::Config(format!(
                "noise_level {} must be >= 0",
                self.noise_level
            )));
        }
        Ok(())
    }
}

/// One generated patient with its rasters.
#[derive(Debug, Clone)]
pub struct SyntheticPatient {
    pub patient_id: String,
    pub label: Label,
    pub split: Split,
    pub patches: Vec<PatchItem>,
    /// Indices (into `patches`) of the textured patches.
    pub signal_indices: Vec<usize>,
}

/// Peak amplitude of the stripe textures, in 8-bit pixel units.
const TEXTURE_AMPLITUDE: f64 = 48.0;

/// Stripe wavelength as a fraction of the patch side. Long enough to survive
/// the blur kernel, short enough to survive 50% crops.
const TEXTURE_WAVELENGTH_FRAC: f64 = 1.0 / 6.0;

/// Every patch carries an oriented stripe texture; the orientation band is
/// the class signal. Signal patches (MSI only) use the near-horizontal band,
/// everything else the near-vertical band. Both bands are closed under
/// horizontal flips and axis-aligned crop rescaling, so the label signal
/// survives the stage-1 augmentations.
const SIGNAL_BAND_DEG: (f64, f64) = (-10.0, 10.0);
const BACKGROUND_BAND_DEG: (f64, f64) = (80.0, 100.0);

/// Generate the full synthetic dataset (both splits), deterministically from
/// the config. Identical configs produce identical rasters byte for byte.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<SyntheticPatient>> {
    cfg.validate()?;
    let root = StreamKey::new(cfg.seed);
    let mut patients = Vec::new();
    for (split, per_class) in [
        (Split::Train, cfg.train_patients_per_class),
        (Split::Validation, cfg.val_patients_per_class),
    ] {
        for label in [Label::Mss, Label::Msi] {
            for idx in 0..per_class {
                let patient_id = format!(
                    "{}_{}_{:03}",
                    match split {
                        Split::Train => "tr",
                        Split::Validation => "va",
                    },
                    match label {
                        Label::Mss => "mss",
                        Label::Msi => "msi",
                    },
                    idx
                );
                patients.push(synth_patient(cfg, root, patient_id, label, split)?);
            }
        }
    }
    Ok(patients)
}

fn synth_patient(
    cfg: &SyntheticConfig,
    root: StreamKey,
    patient_id: String,
    label: Label,
    split: Split,
) -> Result<SyntheticPatient> {
    let key = root.child_str(&patient_id);
    let mut rng = key.rng();
    let (lo, hi) = cfg.patches_per_patient;
    let n_patches = rng.gen_range(lo..=hi);
    // Per-patient tint: a patient-level nuisance feature. Wide enough that a
    // classifier trained without color augmentation can latch onto it.
    let tint: [f64; 3] = [
        105.0 + rng.gen_range(0.0..50.0),
        105.0 + rng.gen_range(0.0..50.0),
        105.0 + rng.gen_range(0.0..50.0),
    ];
    let n_signal = match label {
        Label::Msi => libm::round(cfg.signal_fraction * n_patches as f64) as usize,
        Label::Mss => 0,
    };
    let mut order: Vec<usize> = (0..n_patches).collect();
    shuffle(&mut order, &mut rng);
    let mut signal_indices: Vec<usize> = order.into_iter().take(n_signal).collect();
    signal_indices.sort_unstable();

    let mut patches = Vec::with_capacity(n_patches);
    for p in 0..n_patches {
        let patch_id = format!("{patient_id}_p{p:03}");
        let textured = signal_indices.binary_search(&p).is_ok();
        let raster = synth_patch_raster(cfg, key.child(p as u64 + 1), tint, textured)?;
        patches.push(PatchItem {
            patch_id,
            patient_id: patient_id.clone(),
            label,
            raster,
        });
    }
    Ok(SyntheticPatient { patient_id, label, split, patches, signal_indices })
}

fn synth_patch_raster(
    cfg: &SyntheticConfig,
    key: StreamKey,
    tint: [f64; 3],
    signal: bool,
) -> Result<Raster> {
    let s = cfg.patch_size;
    let mut rng = key.rng();
    let band = if signal { SIGNAL_BAND_DEG } else { BACKGROUND_BAND_DEG };
    let angle = rng.gen_range(band.0..band.1).to_radians();
    let phase: f64 = rng.gen_range(0.0..core::f64::consts::TAU);
    let wavelength = s as f64 * TEXTURE_WAVELENGTH_FRAC;
    let sigma = cfg.noise_level * 255.0;
    let mut data = vec![0u8; s * s * 3];
    for y in 0..s {
        for x in 0..s {
            let t = (x as f64 * libm::cos(angle) + y as f64 * libm::sin(angle)) / wavelength
                * core::f64::consts::TAU
                + phase;
            let stripe = TEXTURE_AMPLITUDE * libm::sin(t);
            for c in 0..3 {
                let noise = sigma * crate::rng::normal(&mut rng);
                let v = tint[c] + stripe + noise;
                data[(y * s + x) * 3 + c] = libm::round(v.clamp(0.0, 255.0)) as u8;
            }
        }
    }
    Raster::new(s, s, data)
}

/// Manifest for a generated dataset, with the on-disk layout
/// `<patient_id>/<patch_id>.png`.
pub fn synthetic_manifest(patients: &[SyntheticPatient], patch_size: usize) -> Result<Manifest> {
    let mut entries = Vec::new();
    for pat in patients {
        for patch in &pat.patches {
            entries.push(ManifestEntry {
                patient_id: pat.patient_id.clone(),
                patch_path: format!("{}/{}.png", pat.patient_id, patch.patch_id),
                label: pat.label,
                split: pat.split,
            });
        }
    }
    Manifest::new(patch_size, entries)
}

/// Collect the generated patches of one split into a [`PatchSet`].
pub fn synthetic_patch_set(patients: &[SyntheticPatient], split: Split, patch_size: usize) -> PatchSet {
    let items = patients
        .iter()
        .filter(|p| p.split == split)
        .flat_map(|p| p.patches.iter().cloned())
        .collect();
    PatchSet { patch_size, items }
}

// ---------------------------------------------------------------------------
// Balanced validation subsets
// ---------------------------------------------------------------------------

/// Select `n_per_class` validation patients per class so the two classes'
/// total patch counts are as close as possible, and return a manifest
/// containing only the selected patients.
///
/// The selection is exact: a count-constrained subset-sum table per class,
/// then the pair of achievable totals with the smallest gap. Ties prefer the
/// larger combined patch total, then the lexicographically smallest patient
/// id set. `_rng_seed` is reserved; the rule is fully deterministic.
pub fn build_balanced_subset(
    manifest: &Manifest,
    n_per_class: usize,
    _rng_seed: u64,
) -> Result<Manifest> {
    if n_per_class == 0 {
        return Err(Error::Config("n_per_class must be positive".to_string()));
    }
    let patients = manifest.patients();
    let mut mss: Vec<(String, usize)> = Vec::new();
    let mut msi: Vec<(String, usize)> = Vec::new();
    for p in patients.iter().filter(|p| p.split == Split::Validation) {
        let item = (p.patient_id.clone(), p.entry_indices.len());
        match p.label {
            Label::Mss => mss.push(item),
            Label::Msi => msi.push(item),
        }
    }
    if mss.len() < n_per_class || msi.len() < n_per_class {
        return Err(Error::Capacity(format!(
            "need {n_per_class} validation patients per class, have MSS={} MSI={}",
            mss.len(),
            msi.len()
        )));
    }
    // patients() is sorted by id already; keep that order for tie-breaks.
    let reach_mss = suffix_reach(&mss, n_per_class);
    let reach_msi = suffix_reach(&msi, n_per_class);
    let sums_mss = achievable(&reach_mss, n_per_class);
    let sums_msi = achievable(&reach_msi, n_per_class);

    let mut best: Option<(usize, usize, usize, usize)> = None; // (gap, -total) via compare
    for &sa in &sums_mss {
        for &sb in &sums_msi {
            let gap = sa.abs_diff(sb);
            let total = sa + sb;
            let cand = (gap, usize::MAX - total, sa, sb);
            if best.map_or(true, |b| cand < b) {
                best = Some(cand);
            }
        }
    }
    let (_, _, target_mss, target_msi) =
        best.ok_or_else(|| Error::Capacity("no achievable selection".to_string()))?;

    let chosen_mss = reconstruct(&mss, &reach_mss, n_per_class, target_mss);
    let chosen_msi = reconstruct(&msi, &reach_msi, n_per_class, target_msi);
    let keep: alloc::collections::BTreeSet<&String> =
        chosen_mss.iter().chain(chosen_msi.iter()).collect();

    let entries: Vec<ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| keep.contains(&e.patient_id))
        .cloned()
        .collect();
    Manifest::new(manifest.patch_size, entries)
}

/// `reach[i][t][s]`: choosing exactly `t` patients from `pool[i..]`, is a
/// patch total of `s` achievable?
fn suffix_reach(pool: &[(String, usize)], n: usize) -> Vec<Vec<Vec<bool>>> {
    let m = pool.len();
    let max_sum: usize = pool.iter().map(|(_, c)| *c).sum();
    let mut reach = vec![vec![vec![false; max_sum + 1]; n + 1]; m + 1];
    reach[m][0][0] = true;
    for i in (0..m).rev() {
        let c = pool[i].1;
        for t in 0..=n {
            for s in 0..=max_sum {
                let skip = reach[i + 1][t][s];
                let take = t > 0 && s >= c && reach[i + 1][t - 1][s - c];
                reach[i][t][s] = skip || take;
            }
        }
    }
    reach
}

fn achievable(reach: &[Vec<Vec<bool>>], n: usize) -> Vec<usize> {
    reach[0][n]
        .iter()
        .enumerate()
        .filter_map(|(s, &ok)| if ok { Some(s) } else { None })
        .collect()
}

/// Lexicographically smallest patient set achieving (`n`, `target`): walk the
/// sorted pool, taking a patient whenever the suffix table confirms the rest
/// can still complete the target.
fn reconstruct(
    pool: &[(String, usize)],
    reach: &[Vec<Vec<bool>>],
    n: usize,
    target: usize,
) -> Vec<String> {
    let mut chosen = Vec::with_capacity(n);
    let (mut t, mut s) = (n, target);
    for (i, (id, c)) in pool.iter().enumerate() {
        if t > 0 && s >= *c && reach[i + 1][t - 1][s - c] {
            chosen.push(id.clone());
            t -= 1;
            s -= c;
        }
        if t == 0 {
            break;
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(pid: &str, patch: &str, label: Label, split: Split) -> ManifestEntry {
        ManifestEntry {
            patient_id: pid.to_string(),
            patch_path: format!("{pid}/{patch}.png"),
            label,
            split,
        }
    }

    #[test]
    fn counts_match_spec_example() {
        // patients {A:MSS:3 patches, B:MSI:2 patches}, all train
        let entries = vec![
            entry("A", "a0", Label::Mss, Split::Train),
            entry("A", "a1", Label::Mss, Split::Train),
            entry("A", "a2", Label::Mss, Split::Train),
            entry("B", "b0", Label::Msi, Split::Train),
            entry("B", "b1", Label::Msi, Split::Train),
        ];
        let m = Manifest::new(32, entries).unwrap();
        assert_eq!(m.class_counts.train_mss, ClassCount { patients: 1, patches: 3 });
        assert_eq!(m.class_counts.train_msi, ClassCount { patients: 1, patches: 2 });
        assert_eq!(m.class_counts.val_mss, ClassCount::default());
        assert_eq!(m.recount(), m.class_counts);
    }

    #[test]
    fn empty_manifest_is_fine() {
        let text = "# patchgroup manifest v1\n# patch_size=32\npatient_id\tpatch_path\tlabel\tsplit\n";
        let m = Manifest::parse_str(text).unwrap();
        assert!(m.entries.is_empty());
        assert_eq!(m.class_counts, ClassCounts::default());
    }

    #[test]
    fn parse_round_trips() {
        let entries = vec![
            entry("A", "a0", Label::Mss, Split::Train),
            entry("B", "b0", Label::Msi, Split::Validation),
        ];
        let m = Manifest::new(48, entries).unwrap();
        let text = m.to_tsv();
        let back = Manifest::parse_str(&text).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn rejects_patient_in_two_splits() {
        let entries = vec![
            entry("A", "a0", Label::Mss, Split::Train),
            entry("A", "a1", Label::Mss, Split::Validation),
        ];
        let err = Manifest::new(32, entries).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)), "{err}");
    }

    #[test]
    fn rejects_label_flip_within_patient() {
        let entries = vec![
            entry("A", "a0", Label::Mss, Split::Train),
            entry("A", "a1", Label::Msi, Split::Train),
        ];
        assert!(matches!(Manifest::new(32, entries), Err(Error::Consistency(_))));
    }

    #[test]
    fn rejects_duplicate_patch_ids() {
        let entries = vec![
            entry("A", "p0", Label::Mss, Split::Train),
            entry("B", "p0", Label::Msi, Split::Train),
        ];
        assert!(matches!(Manifest::new(32, entries), Err(Error::Consistency(_))));
    }

    #[test]
    fn rejects_unknown_label() {
        assert!(matches!(Label::parse("XYZ"), Err(Error::Parse(_))));
        assert_eq!(Label::parse("msimut").unwrap(), Label::Msi);
    }

    #[test]
    fn synthetic_counts_follow_config() {
        // 2 patients/class train, 4 patches each, signal_fraction 1.0
        let cfg = SyntheticConfig {
            train_patients_per_class: 2,
            val_patients_per_class: 1,
            patches_per_patient: (4, 4),
            patch_size: 16,
            signal_fraction: 1.0,
            noise_level: 0.05,
            seed: 7,
        };
        let pats = generate_synthetic(&cfg).unwrap();
        let train: Vec<_> = pats.iter().filter(|p| p.split == Split::Train).collect();
        assert_eq!(train.len(), 4);
        let total: usize = train.iter().map(|p| p.patches.len()).sum();
        assert_eq!(total, 16);
        let msi_signal: usize = train
            .iter()
            .filter(|p| p.label == Label::Msi)
            .map(|p| p.signal_indices.len())
            .sum();
        assert_eq!(msi_signal, 8, "all MSI patches carry the texture at fraction 1");
        for p in pats.iter().filter(|p| p.label == Label::Mss) {
            assert!(p.signal_indices.is_empty());
        }
    }

    #[test]
    fn signal_fraction_rounding() {
        let cfg = SyntheticConfig {
            train_patients_per_class: 1,
            val_patients_per_class: 1,
            patches_per_patient: (6, 6),
            patch_size: 16,
            signal_fraction: 0.5,
            noise_level: 0.0,
            seed: 1,
        };
        let pats = generate_synthetic(&cfg).unwrap();
        for p in pats.iter().filter(|p| p.label == Label::Msi) {
            assert_eq!(p.signal_indices.len(), 3, "round(0.5 * 6) = 3");
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let cfg = SyntheticConfig {
            train_patients_per_class: 2,
            val_patients_per_class: 1,
            patches_per_patient: (3, 5),
            patch_size: 16,
            signal_fraction: 0.4,
            noise_level: 0.1,
            seed: 7,
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.patient_id, y.patient_id);
            assert_eq!(x.patches.len(), y.patches.len());
            for (p, q) in x.patches.iter().zip(y.patches.iter()) {
                assert_eq!(p.raster, q.raster);
            }
        }
        let other = SyntheticConfig { seed: 8, ..cfg };
        let c = generate_synthetic(&other).unwrap();
        assert!(
            a.iter().zip(c.iter()).any(|(x, y)| {
                x.patches.len() != y.patches.len()
                    || x.patches.iter().zip(y.patches.iter()).any(|(p, q)| p.raster != q.raster)
            }),
            "different seeds should change the data"
        );
    }

    #[test]
    fn degenerate_patch_size_rejected() {
        let cfg = SyntheticConfig {
            train_patients_per_class: 1,
            val_patients_per_class: 1,
            patches_per_patient: (1, 1),
            patch_size: 15,
            signal_fraction: 1.0,
            noise_level: 0.0,
            seed: 0,
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }

    fn pool_manifest(mss: &[(&str, usize)], msi: &[(&str, usize)]) -> Manifest {
        let mut entries = Vec::new();
        for (pid, n) in mss {
            for k in 0..*n {
                entries.push(entry(pid, &format!("{pid}_{k}"), Label::Mss, Split::Validation));
            }
        }
        for (pid, n) in msi {
            for k in 0..*n {
                entries.push(entry(pid, &format!("{pid}_{k}"), Label::Msi, Split::Validation));
            }
        }
        Manifest::new(16, entries).unwrap()
    }

    #[test]
    fn balanced_subset_matches_brute_force_example() {
        // pool {MSS: 10, 2; MSI: 9, 3}, n=1 -> picks 10 vs 9 (gap 1)
        let m = pool_manifest(&[("a", 10), ("b", 2)], &[("c", 9), ("d", 3)]);
        let sub = build_balanced_subset(&m, 1, 0).unwrap();
        let c = sub.class_counts;
        assert_eq!(c.val_mss, ClassCount { patients: 1, patches: 10 });
        assert_eq!(c.val_msi, ClassCount { patients: 1, patches: 9 });
    }

    #[test]
    fn balanced_subset_identity_when_all_selected() {
        let m = pool_manifest(&[("a", 3), ("b", 5)], &[("c", 4), ("d", 4)]);
        let sub = build_balanced_subset(&m, 2, 0).unwrap();
        assert_eq!(sub.entries.len(), m.entries.len());
        assert_eq!(sub.class_counts, m.class_counts);
    }

    #[test]
    fn balanced_subset_reports_capacity() {
        let m = pool_manifest(&[("a", 3)], &[("c", 4), ("d", 4)]);
        let err = build_balanced_subset(&m, 2, 0).unwrap_err();
        match err {
            Error::Capacity(msg) => {
                assert!(msg.contains("MSS=1"), "{msg}");
                assert!(msg.contains("MSI=2"), "{msg}");
            }
            other => panic!("expected capacity error, got {other}"),
        }
    }

    /// Exhaustive optimality check on small pools.
    #[test]
    fn balanced_subset_is_optimal_on_small_pools() {
        let mut rng = StreamKey::new(99).rng();
        for trial in 0..40 {
            let n_mss = rng.gen_range(2..=5usize);
            let n_msi = rng.gen_range(2..=5usize);
            let n_per = rng.gen_range(1..=n_mss.min(n_msi));
            let mss: Vec<(String, usize)> = (0..n_mss)
                .map(|i| (format!("s{i}"), rng.gen_range(1..=20usize)))
                .collect();
            let msi: Vec<(String, usize)> = (0..n_msi)
                .map(|i| (format!("i{i}"), rng.gen_range(1..=20usize)))
                .collect();
            let m = pool_manifest(
                &mss.iter().map(|(s, n)| (s.as_str(), *n)).collect::<Vec<_>>(),
                &msi.iter().map(|(s, n)| (s.as_str(), *n)).collect::<Vec<_>>(),
            );
            let sub = build_balanced_subset(&m, n_per, 0).unwrap();
            let got_gap = sub
                .class_counts
                .val_mss
                .patches
                .abs_diff(sub.class_counts.val_msi.patches);

            // brute force over all pairs of subsets
            let mut best_gap = usize::MAX;
            for a_mask in 0u32..(1 << n_mss) {
                if a_mask.count_ones() as usize != n_per {
                    continue;
                }
                let sa: usize = mss
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| a_mask & (1 << i) != 0)
                    .map(|(_, (_, c))| c)
                    .sum();
                for b_mask in 0u32..(1 << n_msi) {
                    if b_mask.count_ones() as usize != n_per {
                        continue;
                    }
                    let sb: usize = msi
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| b_mask & (1 << i) != 0)
                        .map(|(_, (_, c))| c)
                        .sum();
                    best_gap = best_gap.min(sa.abs_diff(sb));
                }
            }
            assert_eq!(got_gap, best_gap, "trial {trial}: selection not optimal");
            // classes stay balanced in patient count
            assert_eq!(sub.class_counts.val_mss.patients, n_per);
            assert_eq!(sub.class_counts.val_msi.patients, n_per);
        }
    }

    #[test]
    fn split_partition_is_disjoint() {
        let cfg = SyntheticConfig {
            train_patients_per_class: 3,
            val_patients_per_class: 2,
            patches_per_patient: (2, 4),
            patch_size: 16,
            signal_fraction: 0.5,
            noise_level: 0.1,
            seed: 5,
        };
        let pats = generate_synthetic(&cfg).unwrap();
        let manifest = synthetic_manifest(&pats, cfg.patch_size).unwrap();
        let patients = manifest.patients();
        let train: alloc::collections::BTreeSet<_> = patients
            .iter()
            .filter(|p| p.split == Split::Train)
            .map(|p| &p.patient_id)
            .collect();
        let val: alloc::collections::BTreeSet<_> = patients
            .iter()
            .filter(|p| p.split == Split::Validation)
            .map(|p| &p.patient_id)
            .collect();
        assert!(train.is_disjoint(&val));
        // label inheritance over the full manifest
        for e in &manifest.entries {
            let p = patients.iter().find(|p| p.patient_id == e.patient_id).unwrap();
            assert_eq!(e.label, p.label);
        }
    }
}
