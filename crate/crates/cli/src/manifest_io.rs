//! Manifest and raster file IO: reading a manifest plus its referenced PNG
//! patches into memory, and writing generated datasets to disk.

use std::io::BufWriter;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};

use patchgroup_core::data::{
    synthetic_manifest, Manifest, PatchItem, PatchSet, Split, SyntheticPatient,
};
use patchgroup_core::raster::Raster;
use patchgroup_core::Error as CoreError;

use crate::error::{CliError, Result};

/// Parse a manifest file and verify every referenced patch raster exists.
/// Paths are resolved relative to the manifest location.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Core(CoreError::Ingest(format!(
            "manifest {} cannot be read: {e}",
            path.display()
        )))
    })?;
    let manifest = Manifest::parse_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for e in &manifest.entries {
        let p = base.join(&e.patch_path);
        if !p.is_file() {
            return Err(CliError::Core(CoreError::Ingest(format!(
                "patch file {} referenced by manifest does not exist",
                p.display()
            ))));
        }
    }
    Ok(manifest)
}

/// Decode one RGB8 PNG raster; anything but 3-channel 8-bit input is a
/// format error.
pub fn read_raster(path: &Path) -> Result<Raster> {
    let img = ImageReader::open(path)
        .map_err(CliError::io(path.display().to_string()))?
        .decode()
        .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    match img {
        DynamicImage::ImageRgb8(rgb) => {
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            Ok(Raster::new(w, h, rgb.into_raw())?)
        }
        other => Err(CliError::Core(CoreError::Format(format!(
            "{}: expected 3-channel RGB8, got {:?}",
            path.display(),
            other.color()
        )))),
    }
}

pub fn write_raster(path: &Path, raster: &Raster) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir.display().to_string()))?;
    }
    let file = std::fs::File::create(path).map_err(CliError::io(path.display().to_string()))?;
    let enc = PngEncoder::new(BufWriter::new(file));
    enc.write_image(
        raster.data(),
        raster.width() as u32,
        raster.height() as u32,
        ExtendedColorType::Rgb8,
    )
    .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Load every patch of one split into memory, verifying raster dimensions
/// against the manifest's declared patch size.
pub fn load_patch_set(manifest: &Manifest, manifest_path: &Path, split: Split) -> Result<PatchSet> {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut items = Vec::new();
    for e in manifest.split_entries(split) {
        let raster = read_raster(&base.join(&e.patch_path))?;
        if raster.width() != manifest.patch_size || raster.height() != manifest.patch_size {
            return Err(CliError::Core(CoreError::Consistency(format!(
                "patch {} is {}x{}, manifest declares {}",
                e.patch_path,
                raster.width(),
                raster.height(),
                manifest.patch_size
            ))));
        }
        items.push(PatchItem {
            patch_id: e.patch_id().to_string(),
            patient_id: e.patient_id.clone(),
            label: e.label,
            raster,
        });
    }
    Ok(PatchSet { patch_size: manifest.patch_size, items })
}

/// Write a generated dataset to disk: `<out>/<patient>/<patch>.png` plus
/// `manifest.tsv`. Returns the manifest path.
pub fn write_synthetic(
    patients: &[SyntheticPatient],
    patch_size: usize,
    out_dir: &Path,
) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir.display().to_string()))?;
    for pat in patients {
        for patch in &pat.patches {
            let path = out_dir
                .join(&pat.patient_id)
                .join(format!("{}.png", patch.patch_id));
            write_raster(&path, &patch.raster)?;
        }
    }
    let manifest = synthetic_manifest(patients, patch_size)?;
    let manifest_path = out_dir.join("manifest.tsv");
    std::fs::write(&manifest_path, manifest.to_tsv())
        .map_err(CliError::io(manifest_path.display().to_string()))?;
    Ok(manifest_path)
}
