//! Model-facing evaluation: embedding extraction, the single-shot
//! protocol runner, unseen-rate probing, and the CSV embedding export.

use ndarray::{Array2, Array4};
use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use crate::datagen::{downsample_upsample, ImageRecord};
use crate::error::{Error, Result};
use crate::eval::metrics::{cmc, distance_matrix, map_score, rank_list};
use crate::eval::probe::{invariance_probe_on_embeddings, InvarianceProbe};
use crate::eval::report::EvalReport;
use crate::model::RainModel;

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub ranks: Vec<usize>,
    /// L2-normalize embeddings before distances (cosine-equivalent
    /// ordering). Raw Euclidean when false.
    pub normalize: bool,
    pub fingerprint: String,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ranks: vec![1, 5, 10, 20],
            normalize: true,
            fingerprint: String::new(),
        }
    }
}

const EMBED_CHUNK: usize = 64;

/// Stack records into an `(N, 3, H, W)` batch.
pub fn records_to_batch<'a, I>(records: I, h: usize, w: usize) -> Array4<f64>
where
    I: ExactSizeIterator<Item = &'a ndarray::Array3<f64>>,
{
    let n = records.len();
    let mut x = Array4::zeros((n, 3, h, w));
    for (i, img) in records.enumerate() {
        for y in 0..h {
            for xx in 0..w {
                for c in 0..3 {
                    x[[i, c, y, xx]] = img[[y, xx, c]];
                }
            }
        }
    }
    x
}

fn normalize_rows(emb: &mut Array2<f64>) {
    for mut row in emb.outer_iter_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        row.mapv_inplace(|v| v / norm);
    }
}

/// Embed every record in inference mode; one row per record.
pub fn embed_set(
    model: &RainModel,
    records: &[ImageRecord],
    normalize: bool,
) -> Result<Array2<f64>> {
    let d = model.config.embedding_dim();
    let (h, w) = (model.config.input_h, model.config.input_w);
    let mut out = Array2::zeros((records.len(), d));
    for (chunk_idx, chunk) in records.chunks(EMBED_CHUNK).enumerate() {
        let x = records_to_batch(chunk.iter().map(|r| &r.pixels), h, w);
        let pyr = model.extract(&x)?;
        for (i, row) in pyr.embedding.outer_iter().enumerate() {
            out.row_mut(chunk_idx * EMBED_CHUNK + i).assign(&row);
        }
    }
    if normalize {
        normalize_rows(&mut out);
    }
    Ok(out)
}

/// Run the single-shot protocol over a query and gallery set.
pub fn evaluate(
    model: &RainModel,
    query: &[ImageRecord],
    gallery: &[ImageRecord],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if query.is_empty() || gallery.is_empty() {
        return Err(Error::invalid("evaluate: empty query or gallery"));
    }
    let q_emb = embed_set(model, query, opts.normalize)?;
    let g_emb = embed_set(model, gallery, opts.normalize)?;
    let dist = distance_matrix(&q_emb, &g_emb)?;
    let query_ids: Vec<usize> = query.iter().map(|r| r.identity).collect();
    let gallery_ids: Vec<usize> = gallery.iter().map(|r| r.identity).collect();
    let cmc_map = cmc(&dist, &query_ids, &gallery_ids, &opts.ranks)?;
    let map = map_score(&dist, &query_ids, &gallery_ids)?;
    let mut per_query_ranks = Vec::with_capacity(query.len());
    for qi in 0..query.len() {
        per_query_ranks.push(rank_list(&dist, &gallery_ids, qi, gallery_ids.len())?);
    }
    let query_rates: BTreeSet<u32> = query.iter().map(|r| r.rate).collect();
    let report = EvalReport {
        version: 1,
        config_fingerprint: opts.fingerprint.clone(),
        cmc: cmc_map,
        map,
        per_query_ranks,
        query_rates,
        num_query: query.len(),
        num_gallery: gallery.len(),
    };
    report.validate()?;
    Ok(report)
}

/// Re-synthesize the queries at a rate absent from training and run the
/// standard protocol against the unchanged HR gallery.
pub fn unseen_resolution_eval(
    model: &RainModel,
    query: &[ImageRecord],
    gallery: &[ImageRecord],
    train_rates: &BTreeSet<u32>,
    probe_rate: u32,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if train_rates.contains(&probe_rate) {
        return Err(Error::invalid(format!(
            "probe rate {probe_rate} was present in training rates {train_rates:?}; use the standard evaluation"
        )));
    }
    let mut probed = Vec::with_capacity(query.len());
    for rec in query {
        let mut r = rec.clone();
        r.pixels = downsample_upsample(&rec.hr_pixels, probe_rate)?;
        r.rate = probe_rate;
        probed.push(r);
    }
    evaluate(model, &probed, gallery, opts)
}

/// HR-vs-LR separability of the embedding, on paired records: each
/// record contributes its HR ground truth and its LR rendering.
pub fn invariance_probe(
    model: &RainModel,
    paired_records: &[ImageRecord],
    seed: u64,
) -> Result<InvarianceProbe> {
    if paired_records.is_empty() {
        return Err(Error::invalid("invariance_probe: no records"));
    }
    let hr_side: Vec<ImageRecord> = paired_records
        .iter()
        .map(|r| {
            let mut hr = r.clone();
            hr.pixels = r.hr_pixels.clone();
            hr.rate = 1;
            hr
        })
        .collect();
    let hr_emb = embed_set(model, &hr_side, false)?;
    let lr_emb = embed_set(model, paired_records, false)?;
    invariance_probe_on_embeddings(&hr_emb, &lr_emb, seed)
}

/// CSV export of embeddings: `identity, rate, v0..v{d-1}` per record.
/// f64 values print in shortest round-trip form, so reading the file
/// back recovers bit-identical matrices.
pub fn export_embeddings_csv(
    model: &RainModel,
    records: &[ImageRecord],
    normalize: bool,
    path: &Path,
) -> Result<()> {
    let emb = embed_set(model, records, normalize)?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let d = emb.ncols();
    let header: Vec<String> = ["identity".to_string(), "rate".to_string()]
        .into_iter()
        .chain((0..d).map(|i| format!("v{i}")))
        .collect();
    writeln!(file, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
    for (rec, row) in records.iter().zip(emb.outer_iter()) {
        let mut fields = vec![rec.identity.to_string(), rec.rate.to_string()];
        fields.extend(row.iter().map(|v| format!("{v}")));
        writeln!(file, "{}", fields.join(",")).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Read an embedding CSV back: `(identity, rate)` pairs plus the matrix.
pub fn read_embeddings_csv(path: &Path) -> Result<(Vec<(usize, u32)>, Array2<f64>)> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = body.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::invalid("empty embedding csv"))?;
    let d = header.split(',').count() - 2;
    let mut meta = Vec::new();
    let mut values = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let identity: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::invalid(format!("bad identity in csv line: {line}")))?;
        let rate: u32 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::invalid(format!("bad rate in csv line: {line}")))?;
        meta.push((identity, rate));
        for p in parts {
            values.push(
                p.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad value in csv line: {line}")))?,
            );
        }
    }
    let n = meta.len();
    let emb = Array2::from_shape_vec((n, d), values)
        .map_err(|e| Error::invalid(format!("embedding csv shape: {e}")))?;
    Ok((meta, emb))
}
