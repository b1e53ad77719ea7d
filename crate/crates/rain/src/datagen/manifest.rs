//! Dataset persistence: PNG images plus a JSON-lines manifest.
//!
//! Images on disk are always the HR ground truth; a manifest line with
//! `rate > 1` instructs the loader to re-synthesize the LR pixels
//! deterministically at load time. Layout:
//! `root/images/<split>/<identity>/<camera>_<index>.png`.

use image::{ImageBuffer, Rgb};
use ndarray::Array3;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::datagen::{downsample_upsample, ImageRecord, MlrDataset};
use crate::error::{Error, Result};

/// One manifest line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRecord {
    /// Image path relative to the manifest's directory.
    pub path: String,
    pub identity: usize,
    pub camera: u32,
    pub rate: u32,
    /// One of `train`, `query`, `gallery`.
    pub split: String,
    pub labeled: bool,
}

fn to_u8(img: &Array3<f64>) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let px = |c: usize| (img[[y as usize, x as usize, c]].clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([px(0), px(1), px(2)])
    })
}

fn from_u8(img: &image::RgbImage) -> Array3<f64> {
    let (w, h) = img.dimensions();
    Array3::from_shape_fn((h as usize, w as usize, 3), |(y, x, c)| {
        f64::from(img.get_pixel(x as u32, y as u32)[c]) / 255.0
    })
}

/// Write a dataset under `dir`; returns the manifest path.
pub fn save_dataset(dir: &Path, dataset: &MlrDataset) -> Result<PathBuf> {
    let manifest_path = dir.join("manifest.jsonl");
    let mut lines = Vec::new();
    let mut counters: BTreeMap<(String, usize, u32), usize> = BTreeMap::new();
    for (split, records) in [
        ("train", &dataset.train),
        ("query", &dataset.query),
        ("gallery", &dataset.gallery),
    ] {
        for rec in records {
            let key = (split.to_string(), rec.identity, rec.camera);
            let index = counters.entry(key).or_insert(0);
            let rel = format!(
                "images/{split}/{}/{}_{index}.png",
                rec.identity, rec.camera
            );
            *index += 1;
            let abs = dir.join(&rel);
            if let Some(parent) = abs.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            to_u8(&rec.hr_pixels)
                .save(&abs)
                .map_err(|e| Error::Image {
                    path: abs.clone(),
                    source: e,
                })?;
            lines.push(ManifestRecord {
                path: rel,
                identity: rec.identity,
                camera: rec.camera,
                rate: rec.rate,
                split: split.to_string(),
                labeled: rec.labeled,
            });
        }
    }
    let mut file = std::fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    for line in &lines {
        let json = serde_json::to_string(line).map_err(|e| Error::Json {
            path: manifest_path.clone(),
            source: e,
        })?;
        writeln!(file, "{json}").map_err(|e| Error::io(&manifest_path, e))?;
    }
    Ok(manifest_path)
}

fn load_record(base: &Path, m: &ManifestRecord) -> Result<ImageRecord> {
    let path = base.join(&m.path);
    let img = image::open(&path)
        .map_err(|e| Error::Image {
            path: path.clone(),
            source: e,
        })?
        .to_rgb8();
    let hr = from_u8(&img);
    let pixels = if m.rate > 1 {
        downsample_upsample(&hr, m.rate)?
    } else {
        hr.clone()
    };
    Ok(ImageRecord {
        pixels,
        hr_pixels: hr,
        identity: m.identity,
        camera: m.camera,
        rate: m.rate,
        labeled: m.labeled,
    })
}

/// Load a dataset from a JSON-lines manifest written by [`save_dataset`].
pub fn load_dataset(manifest_path: &Path) -> Result<MlrDataset> {
    let file = std::fs::File::open(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut train = Vec::new();
    let mut query = Vec::new();
    let mut gallery = Vec::new();
    let mut rates_used = BTreeSet::new();
    let mut max_identity = 0usize;
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(manifest_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let m: ManifestRecord = serde_json::from_str(&line).map_err(|e| Error::Json {
            path: manifest_path.to_path_buf(),
            source: e,
        })?;
        let rec = load_record(base, &m)?;
        max_identity = max_identity.max(m.identity);
        rates_used.insert(m.rate);
        match m.split.as_str() {
            "train" => train.push(rec),
            "query" => query.push(rec),
            "gallery" => gallery.push(rec),
            other => {
                return Err(Error::invalid(format!(
                    "manifest line {}: unknown split {other:?}",
                    lineno + 1
                )))
            }
        }
    }
    if query.is_empty() || gallery.is_empty() {
        return Err(Error::Protocol(
            "manifest holds no query or no gallery records".into(),
        ));
    }
    Ok(MlrDataset {
        train,
        query,
        gallery,
        num_identities: max_identity + 1,
        rates_used,
    })
}

/// Scan a `root/<identity>/<camera>_<index>.png` tree into HR records.
/// Directory names are mapped to dense identity indices in sorted order.
pub fn load_image_dir(root: &Path) -> Result<Vec<ImageRecord>> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::invalid(format!(
            "no identity directories under {}",
            root.display()
        )));
    }
    let mut records = Vec::new();
    for (identity, dir) in dirs.iter().enumerate() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "png"))
            .collect();
        files.sort();
        for file in files {
            let stem = file
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default();
            let camera: u32 = stem
                .split('_')
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "cannot parse camera id from file name {}",
                        file.display()
                    ))
                })?;
            let img = image::open(&file)
                .map_err(|e| Error::Image {
                    path: file.clone(),
                    source: e,
                })?
                .to_rgb8();
            records.push(ImageRecord::hr(from_u8(&img), identity, camera));
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{make_toy_corpus, synthesize_mlr, MlrOptions};

    #[test]
    fn save_load_round_trip() {
        let corpus = make_toy_corpus(6, 4, 16, 13).unwrap();
        let ds = synthesize_mlr(
            &corpus,
            &MlrOptions {
                seed: 13,
                ..MlrOptions::default()
            },
        )
        .unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let manifest = save_dataset(tmp.path(), &ds).unwrap();
        let loaded = load_dataset(&manifest).unwrap();
        assert_eq!(loaded.train.len(), ds.train.len());
        assert_eq!(loaded.query.len(), ds.query.len());
        assert_eq!(loaded.gallery.len(), ds.gallery.len());
        assert_eq!(loaded.num_identities, ds.num_identities);
        // 8-bit quantization bounds the reload error
        for (a, b) in ds.gallery.iter().zip(loaded.gallery.iter()) {
            assert_eq!(a.identity, b.identity);
            let max_err = a
                .hr_pixels
                .iter()
                .zip(b.hr_pixels.iter())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(max_err <= 0.5 / 255.0 + 1e-12, "max_err {max_err}");
        }
        // loading twice is bit-identical
        let again = load_dataset(&manifest).unwrap();
        for (a, b) in loaded.query.iter().zip(again.query.iter()) {
            assert_eq!(a.pixels, b.pixels);
        }
    }
}
