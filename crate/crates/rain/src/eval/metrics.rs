//! Distance matrices, CMC, and mean average precision.

use ndarray::Array2;
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Pairwise Euclidean distances between query and gallery embeddings.
///
/// `D[i, j] = ||q_i - g_j||_2`.
pub fn distance_matrix(query: &Array2<f64>, gallery: &Array2<f64>) -> Result<Array2<f64>> {
    if query.ncols() != gallery.ncols() {
        return Err(Error::invalid(format!(
            "embedding dims differ: query {} vs gallery {}",
            query.ncols(),
            gallery.ncols()
        )));
    }
    let mut dist = Array2::zeros((query.nrows(), gallery.nrows()));
    for (i, q) in query.outer_iter().enumerate() {
        for (j, g) in gallery.outer_iter().enumerate() {
            let s: f64 = q
                .iter()
                .zip(g.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dist[[i, j]] = s.sqrt();
        }
    }
    Ok(dist)
}

/// Gallery indices of one query row sorted by ascending distance,
/// ties broken by gallery index.
pub fn ranked_gallery(dist_row: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dist_row.len()).collect();
    order.sort_by(|&a, &b| {
        dist_row[a]
            .total_cmp(&dist_row[b])
            .then(a.cmp(&b))
    });
    order
}

fn validate_protocol(query_ids: &[usize], gallery_ids: &[usize]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for &g in gallery_ids {
        if !seen.insert(g) {
            return Err(Error::Protocol(format!(
                "gallery is not single-shot: identity {g} appears more than once"
            )));
        }
    }
    for &q in query_ids {
        if !seen.contains(&q) {
            return Err(Error::Protocol(format!(
                "query identity {q} missing from gallery"
            )));
        }
    }
    Ok(())
}

fn check_dims(dist: &Array2<f64>, query_ids: &[usize], gallery_ids: &[usize]) -> Result<()> {
    if dist.nrows() != query_ids.len() || dist.ncols() != gallery_ids.len() {
        return Err(Error::invalid(format!(
            "distance matrix {}x{} does not match {} queries x {} gallery entries",
            dist.nrows(),
            dist.ncols(),
            query_ids.len(),
            gallery_ids.len()
        )));
    }
    Ok(())
}

/// 1-based position of each query's correct gallery entry in its ranking.
fn match_positions(
    dist: &Array2<f64>,
    query_ids: &[usize],
    gallery_ids: &[usize],
) -> Result<Vec<usize>> {
    check_dims(dist, query_ids, gallery_ids)?;
    validate_protocol(query_ids, gallery_ids)?;
    let mut positions = Vec::with_capacity(query_ids.len());
    for (i, &qid) in query_ids.iter().enumerate() {
        let row: Vec<f64> = dist.row(i).to_vec();
        let order = ranked_gallery(&row);
        let pos = order
            .iter()
            .position(|&j| gallery_ids[j] == qid)
            .expect("validated above: query identity present in gallery");
        positions.push(pos + 1);
    }
    Ok(positions)
}

/// Cumulative match characteristic at the requested ranks, in percent.
pub fn cmc(
    dist: &Array2<f64>,
    query_ids: &[usize],
    gallery_ids: &[usize],
    ranks: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    if query_ids.is_empty() {
        return Err(Error::invalid("cmc: no queries"));
    }
    let positions = match_positions(dist, query_ids, gallery_ids)?;
    let n = positions.len() as f64;
    let mut out = BTreeMap::new();
    for &k in ranks {
        if k == 0 {
            return Err(Error::invalid("cmc: rank 0 requested"));
        }
        let hits = positions.iter().filter(|&&p| p <= k).count() as f64;
        out.insert(k, 100.0 * hits / n);
    }
    Ok(out)
}

/// Average precision of one ranked relevance list.
///
/// General multi-shot form: the mean of precision-at-i over the relevant
/// positions. With a single relevant entry this reduces to the reciprocal
/// of its position.
pub fn average_precision(ranked_rel: &[bool]) -> f64 {
    let total_rel = ranked_rel.iter().filter(|&&r| r).count();
    if total_rel == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &rel) in ranked_rel.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / total_rel as f64
}

/// Mean average precision over all queries, in `[0, 1]`.
pub fn map_score(dist: &Array2<f64>, query_ids: &[usize], gallery_ids: &[usize]) -> Result<f64> {
    if query_ids.is_empty() {
        return Err(Error::invalid("map: no queries"));
    }
    check_dims(dist, query_ids, gallery_ids)?;
    validate_protocol(query_ids, gallery_ids)?;
    let mut total = 0.0;
    for (i, &qid) in query_ids.iter().enumerate() {
        let row: Vec<f64> = dist.row(i).to_vec();
        let order = ranked_gallery(&row);
        let rel: Vec<bool> = order.iter().map(|&j| gallery_ids[j] == qid).collect();
        total += average_precision(&rel);
    }
    Ok(total / query_ids.len() as f64)
}

/// Top-`k` gallery identities for one query, nearest first.
pub fn rank_list(
    dist: &Array2<f64>,
    gallery_ids: &[usize],
    query_index: usize,
    k: usize,
) -> Result<Vec<usize>> {
    if query_index >= dist.nrows() {
        return Err(Error::invalid(format!(
            "query index {query_index} out of range ({} queries)",
            dist.nrows()
        )));
    }
    if k == 0 || k > gallery_ids.len() || dist.ncols() != gallery_ids.len() {
        return Err(Error::invalid(format!(
            "rank_list: k={k} invalid for gallery of {}",
            gallery_ids.len()
        )));
    }
    let row: Vec<f64> = dist.row(query_index).to_vec();
    let order = ranked_gallery(&row);
    Ok(order[..k].iter().map(|&j| gallery_ids[j]).collect())
}
