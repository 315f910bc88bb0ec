//! On-disk datasets: a directory of PNG pairs indexed by `manifest.jsonl`.
//!
//! Each manifest line is `{"id": .., "image": .., "label": .., "healthy": ..}` with paths
//! relative to the dataset directory.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::image::{decode_rgb_png, encode_rgb_png, RgbImage};
use super::palette::{decode_paletted_png_with, encode_paletted_png_with};
use super::Sample;
use crate::error::{Error, Result};
use crate::label::{LabelImage, NUM_CLASSES};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub image: String,
    pub label: String,
    #[serde(default)]
    pub healthy: bool,
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRecord>> {
    let path = dir.join(MANIFEST_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::ingestion(path.display().to_string(), e.to_string()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line)
            .map_err(|e| Error::ingestion(format!("{}:{}", path.display(), n + 1), e.to_string()))?;
        out.push(rec);
    }
    let mut seen = std::collections::HashSet::new();
    for r in &out {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::ingestion(path.display().to_string(), format!("duplicate id '{}'", r.id)));
        }
    }
    Ok(out)
}

pub fn write_manifest(dir: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut f = fs::File::create(dir.join(MANIFEST_FILE))?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

/// Writes `images/{id}.png`, `labels/{id}.png` and the manifest.
pub fn write_dataset(dir: &Path, items: &[(String, RgbImage, LabelImage, bool)]) -> Result<Vec<ManifestRecord>> {
    write_dataset_with(dir, items, NUM_CLASSES)
}

pub fn write_dataset_with(
    dir: &Path,
    items: &[(String, RgbImage, LabelImage, bool)],
    num_classes: usize,
) -> Result<Vec<ManifestRecord>> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("labels"))?;
    let mut records = Vec::with_capacity(items.len());
    for (id, img, label, healthy) in items {
        let rec = ManifestRecord {
            id: id.clone(),
            image: format!("images/{id}.png"),
            label: format!("labels/{id}.png"),
            healthy: *healthy,
        };
        fs::write(dir.join(&rec.image), encode_rgb_png(img)?)?;
        fs::write(dir.join(&rec.label), encode_paletted_png_with(label, num_classes)?)?;
        records.push(rec);
    }
    write_manifest(dir, &records)?;
    Ok(records)
}

fn read_file(path: &PathBuf) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::ingestion(path.display().to_string(), e.to_string()))
}

/// Loads one record; `size` resizes both image (bilinear) and label (nearest) to a square.
pub fn load_record(
    dir: &Path,
    rec: &ManifestRecord,
    size: Option<usize>,
    num_classes: usize,
) -> Result<(RgbImage, LabelImage)> {
    let ipath = dir.join(&rec.image);
    let lpath = dir.join(&rec.label);
    let mut img = decode_rgb_png(&read_file(&ipath)?)
        .map_err(|e| Error::ingestion(ipath.display().to_string(), e.to_string()))?;
    let mut label = decode_paletted_png_with(&read_file(&lpath)?, num_classes)
        .map_err(|e| Error::ingestion(lpath.display().to_string(), e.to_string()))?;
    if (img.width, img.height) != (label.width(), label.height()) {
        return Err(Error::ingestion(
            lpath.display().to_string(),
            format!(
                "label is {}x{} but image is {}x{}",
                label.width(),
                label.height(),
                img.width,
                img.height
            ),
        ));
    }
    if let Some(s) = size {
        if (img.width, img.height) != (s, s) {
            img = img.resize_bilinear(s, s);
            label = label.resize_nearest(s, s);
        }
    }
    Ok((img, label))
}

pub fn load_dataset(dir: &Path, size: Option<usize>) -> Result<Vec<Sample>> {
    load_dataset_with(dir, size, NUM_CLASSES)
}

pub fn load_dataset_with(dir: &Path, size: Option<usize>, num_classes: usize) -> Result<Vec<Sample>> {
    read_manifest(dir)?
        .iter()
        .map(|rec| {
            let (img, label) = load_record(dir, rec, size, num_classes)?;
            Ok(Sample {
                id: rec.id.clone(),
                image: img.to_tensor(),
                label,
                healthy: rec.healthy,
            })
        })
        .collect()
}
