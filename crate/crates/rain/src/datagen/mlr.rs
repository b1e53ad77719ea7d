//! MLR synthesis, protocol splits, triplet batching, and label masking.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

use crate::datagen::{downsample_upsample, ImageRecord, MlrDataset};
use crate::error::{Error, Result};
use crate::rng::{derive_rng, stream};

/// Options for [`synthesize_mlr`].
#[derive(Debug, Clone)]
pub struct MlrOptions {
    /// Down-sampling rates drawn uniformly per image of an LR camera.
    pub rates: BTreeSet<u32>,
    /// Cameras whose images are down-sampled; others stay HR.
    pub lr_cameras: BTreeSet<u32>,
    /// Fraction of identities assigned to the train split.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for MlrOptions {
    fn default() -> Self {
        MlrOptions {
            rates: [2, 3, 4].into_iter().collect(),
            lr_cameras: [1].into_iter().collect(),
            train_fraction: 0.5,
            seed: 0,
        }
    }
}

/// Down-sample every record of a designated LR camera at a rate drawn
/// uniformly from `rates`; other cameras pass through unchanged. The HR
/// original is kept as `hr_pixels`.
pub fn assign_lr_rates(
    records: &[ImageRecord],
    rates: &BTreeSet<u32>,
    lr_cameras: &BTreeSet<u32>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ImageRecord>> {
    if records.is_empty() {
        return Err(Error::invalid("assign_lr_rates: no records"));
    }
    if rates.is_empty() {
        return Err(Error::invalid("assign_lr_rates: empty rate set"));
    }
    if let Some(&r) = rates.iter().find(|&&r| r < 1) {
        return Err(Error::invalid(format!("assign_lr_rates: rate {r} < 1")));
    }
    let rate_list: Vec<u32> = rates.iter().copied().collect();
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        if rec.rate != 1 {
            return Err(Error::invalid(format!(
                "assign_lr_rates: input record already down-sampled (rate {})",
                rec.rate
            )));
        }
        if lr_cameras.contains(&rec.camera) {
            let rate = rate_list[rng.random_range(0..rate_list.len())];
            let mut lr = rec.clone();
            lr.rate = rate;
            lr.pixels = downsample_upsample(&rec.hr_pixels, rate)?;
            out.push(lr);
        } else {
            out.push(rec.clone());
        }
    }
    Ok(out)
}

/// Build the full MLR dataset: per-image LR assignment on the designated
/// cameras, identity-level train/test split, and the single-shot
/// query/gallery split of the test identities.
pub fn synthesize_mlr(hr_records: &[ImageRecord], opts: &MlrOptions) -> Result<MlrDataset> {
    if !(opts.train_fraction > 0.0 && opts.train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction {} outside (0, 1)",
            opts.train_fraction
        )));
    }
    let mut rng = derive_rng(opts.seed, &[stream::MLR_RATES]);
    let synthesized = assign_lr_rates(hr_records, &opts.rates, &opts.lr_cameras, &mut rng)?;

    let mut identities: Vec<usize> = synthesized
        .iter()
        .map(|r| r.identity)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let num_identities = identities.iter().max().map_or(0, |&m| m + 1);
    let mut split_rng = derive_rng(opts.seed, &[stream::SPLIT]);
    identities.shuffle(&mut split_rng);
    let n_train = ((identities.len() as f64) * opts.train_fraction).floor() as usize;
    if n_train == 0 || n_train == identities.len() {
        return Err(Error::invalid(format!(
            "train_fraction {} leaves an empty split for {} identities",
            opts.train_fraction,
            identities.len()
        )));
    }
    let train_ids: BTreeSet<usize> = identities[..n_train].iter().copied().collect();

    let (train, test): (Vec<_>, Vec<_>) = synthesized
        .into_iter()
        .partition(|r| train_ids.contains(&r.identity));

    let (query, gallery) = split_query_gallery(&test, opts.seed)?;
    Ok(MlrDataset {
        train,
        query,
        gallery,
        num_identities,
        rates_used: opts.rates.clone(),
    })
}

/// Single-shot protocol split: the gallery takes one uniformly chosen HR
/// record per identity, the query set takes every LR record.
pub fn split_query_gallery(
    test_records: &[ImageRecord],
    seed: u64,
) -> Result<(Vec<ImageRecord>, Vec<ImageRecord>)> {
    if test_records.is_empty() {
        return Err(Error::invalid("split_query_gallery: no test records"));
    }
    let mut by_identity: BTreeMap<usize, Vec<&ImageRecord>> = BTreeMap::new();
    for rec in test_records {
        by_identity.entry(rec.identity).or_default().push(rec);
    }
    let mut rng = derive_rng(seed, &[stream::SPLIT, 1]);
    let mut gallery = Vec::with_capacity(by_identity.len());
    let mut query = Vec::new();
    for (&identity, recs) in &by_identity {
        let hr: Vec<&&ImageRecord> = recs.iter().filter(|r| r.rate == 1).collect();
        let lr: Vec<&&ImageRecord> = recs.iter().filter(|r| r.rate > 1).collect();
        if hr.is_empty() {
            return Err(Error::Protocol(format!(
                "identity {identity} has no HR image for the gallery"
            )));
        }
        if lr.is_empty() {
            return Err(Error::Protocol(format!(
                "identity {identity} has no LR image to query with"
            )));
        }
        let pick = rng.random_range(0..hr.len());
        gallery.push((*hr[pick]).clone());
        query.extend(lr.into_iter().map(|r| (**r).clone()));
    }
    Ok((query, gallery))
}

/// An identity-balanced batch with within-batch triplet assignments.
///
/// `indices` point into the train list; `triples` hold positions within
/// `indices` such that anchor and positive share an identity and the
/// negative does not.
#[derive(Debug, Clone)]
pub struct TripletBatch {
    pub indices: Vec<usize>,
    pub triples: Vec<(usize, usize, usize)>,
}

/// Sample `identities_per_batch` identities with `images_per_identity`
/// records each, then one (positive, negative) pair per anchor.
pub fn sample_triplet_batch(
    train: &[ImageRecord],
    identities_per_batch: usize,
    images_per_identity: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TripletBatch> {
    let p = identities_per_batch;
    let q = images_per_identity;
    if p < 2 {
        return Err(Error::invalid(format!("identities_per_batch {p} < 2")));
    }
    if q < 2 {
        return Err(Error::invalid(format!(
            "images_per_identity {q} < 2 (a positive needs a different image)"
        )));
    }
    let mut by_identity: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, rec) in train.iter().enumerate() {
        by_identity.entry(rec.identity).or_default().push(i);
    }
    let mut eligible: Vec<usize> = by_identity
        .iter()
        .filter(|(_, v)| v.len() >= q)
        .map(|(&id, _)| id)
        .collect();
    if eligible.len() < p {
        return Err(Error::invalid(format!(
            "need {p} identities with >= {q} images, found {}",
            eligible.len()
        )));
    }
    eligible.shuffle(rng);
    let chosen = &eligible[..p];

    let mut indices = Vec::with_capacity(p * q);
    for &id in chosen {
        let mut pool = by_identity[&id].clone();
        pool.shuffle(rng);
        indices.extend_from_slice(&pool[..q]);
    }

    // anchors are laid out identity-major: positions g*q .. g*q+q share an identity
    let mut triples = Vec::with_capacity(p * q);
    for g in 0..p {
        for a in 0..q {
            let anchor = g * q + a;
            let pos_offset = rng.random_range(0..q - 1);
            let positive = g * q + (a + 1 + pos_offset) % q;
            let neg_rel = rng.random_range(0..(p - 1) * q);
            let neg_group = neg_rel / q;
            let negative = if neg_group >= g {
                (neg_group + 1) * q + neg_rel % q
            } else {
                neg_rel
            };
            triples.push((anchor, positive, negative));
        }
    }
    Ok(TripletBatch { indices, triples })
}

/// Flag exactly `floor(fraction * N)` records as labeled, spread across
/// identities by largest-remainder allocation; the rest are unlabeled.
pub fn mask_labels(
    records: &[ImageRecord],
    labeled_fraction: f64,
    seed: u64,
) -> Result<Vec<ImageRecord>> {
    if !(0.0..=1.0).contains(&labeled_fraction) {
        return Err(Error::invalid(format!(
            "labeled_fraction {labeled_fraction} outside [0, 1]"
        )));
    }
    let n = records.len();
    let target = (labeled_fraction * n as f64).floor() as usize;

    let mut by_identity: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, rec) in records.iter().enumerate() {
        by_identity.entry(rec.identity).or_default().push(i);
    }

    // integral share per identity, then distribute the remainder by
    // largest fractional part (ties by identity index)
    let mut quotas: BTreeMap<usize, usize> = BTreeMap::new();
    let mut fractional: Vec<(f64, usize)> = Vec::new();
    let mut allocated = 0usize;
    for (&id, members) in &by_identity {
        let exact = labeled_fraction * members.len() as f64;
        let base = exact.floor() as usize;
        quotas.insert(id, base);
        allocated += base;
        fractional.push((exact - base as f64, id));
    }
    fractional.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut remainder = target.saturating_sub(allocated);
    for &(_, id) in &fractional {
        if remainder == 0 {
            break;
        }
        if quotas[&id] < by_identity[&id].len() {
            *quotas.get_mut(&id).unwrap() += 1;
            remainder -= 1;
        }
    }

    let mut rng = derive_rng(seed, &[stream::LABEL_MASK]);
    let mut labeled = vec![false; n];
    for (&id, members) in &by_identity {
        let mut pool = members.clone();
        pool.shuffle(&mut rng);
        for &i in pool.iter().take(quotas[&id]) {
            labeled[i] = true;
        }
    }
    Ok(records
        .iter()
        .zip(labeled)
        .map(|(rec, flag)| {
            let mut r = rec.clone();
            r.labeled = flag;
            r
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::make_toy_corpus;

    fn toy() -> Vec<ImageRecord> {
        make_toy_corpus(10, 6, 16, 11).unwrap()
    }

    fn opts(seed: u64) -> MlrOptions {
        MlrOptions {
            seed,
            ..MlrOptions::default()
        }
    }

    #[test]
    fn rates_drawn_uniformly_within_binomial_bounds() {
        let recs = make_toy_corpus(30, 20, 16, 5).unwrap();
        let rates: BTreeSet<u32> = [2, 3, 4].into_iter().collect();
        let cams: BTreeSet<u32> = [1].into_iter().collect();
        let mut rng = derive_rng(5, &[77]);
        let out = assign_lr_rates(&recs, &rates, &cams, &mut rng).unwrap();
        let lr: Vec<&ImageRecord> = out.iter().filter(|r| r.rate > 1).collect();
        assert_eq!(lr.len(), 300);
        // 99% binomial bounds around 100 per rate: 100 +- 2.576 * sqrt(300 * 1/3 * 2/3)
        for r in [2u32, 3, 4] {
            let count = lr.iter().filter(|x| x.rate == r).count();
            assert!(
                (79..=121).contains(&count),
                "rate {r} drawn {count} times, outside 99% bounds"
            );
        }
    }

    #[test]
    fn noop_rates_leave_pixels_unchanged() {
        let recs = toy();
        let rates: BTreeSet<u32> = [1].into_iter().collect();
        let cams: BTreeSet<u32> = [0, 1].into_iter().collect();
        let mut rng = derive_rng(0, &[0]);
        let out = assign_lr_rates(&recs, &rates, &cams, &mut rng).unwrap();
        for (a, b) in recs.iter().zip(out.iter()) {
            assert_eq!(a.pixels, b.pixels);
            assert_eq!(b.rate, 1);
        }
    }

    #[test]
    fn synthesize_deterministic_and_partitioned() {
        let recs = toy();
        let a = synthesize_mlr(&recs, &opts(42)).unwrap();
        let b = synthesize_mlr(&recs, &opts(42)).unwrap();
        assert_eq!(a.train.len(), b.train.len());
        for (x, y) in a.train.iter().zip(b.train.iter()) {
            assert_eq!(x.pixels, y.pixels);
            assert_eq!(x.rate, y.rate);
        }
        for (x, y) in a.query.iter().zip(b.query.iter()) {
            assert_eq!(x.pixels, y.pixels);
        }

        // identity-level disjointness
        let train_ids = a.train_identities();
        let test_ids: BTreeSet<usize> = a.query_identities();
        assert!(train_ids.is_disjoint(&test_ids));

        // gallery: one HR record per test identity; queries all LR
        assert_eq!(a.gallery.len(), 5);
        assert!(a.gallery.iter().all(|r| r.rate == 1));
        assert!(a.query.iter().all(|r| r.rate > 1));
        let gal_ids: BTreeSet<usize> = a.gallery.iter().map(|r| r.identity).collect();
        assert_eq!(gal_ids, test_ids);
    }

    #[test]
    fn split_counts_and_minimal_case() {
        // 10 identities x (3 LR + 2 HR) -> gallery 10, query 30
        let mut records = Vec::new();
        let img = ndarray::Array3::from_elem((16, 16, 3), 0.5);
        for id in 0..10 {
            for k in 0..2 {
                records.push(ImageRecord::hr(img.clone(), id, k));
            }
            for _ in 0..3 {
                let mut lr = ImageRecord::hr(img.clone(), id, 1);
                lr.rate = 2;
                records.push(lr);
            }
        }
        let (query, gallery) = split_query_gallery(&records, 3).unwrap();
        assert_eq!(gallery.len(), 10);
        assert_eq!(query.len(), 30);

        let minimal = vec![
            ImageRecord::hr(img.clone(), 0, 0),
            {
                let mut lr = ImageRecord::hr(img.clone(), 0, 1);
                lr.rate = 4;
                lr
            },
        ];
        let (q, g) = split_query_gallery(&minimal, 0).unwrap();
        assert_eq!((q.len(), g.len()), (1, 1));
        assert_eq!(g[0].rate, 1);
        assert_eq!(q[0].rate, 4);
    }

    #[test]
    fn split_same_seed_same_gallery() {
        let recs = toy();
        let ds = synthesize_mlr(&recs, &opts(9)).unwrap();
        let test: Vec<ImageRecord> = ds
            .query
            .iter()
            .chain(ds.gallery.iter())
            .cloned()
            .collect();
        let (_, g1) = split_query_gallery(&test, 123).unwrap();
        let (_, g2) = split_query_gallery(&test, 123).unwrap();
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert_eq!(a.pixels, b.pixels);
        }
    }

    #[test]
    fn split_missing_hr_names_identity() {
        let img = ndarray::Array3::from_elem((16, 16, 3), 0.5);
        let mut lr = ImageRecord::hr(img, 7, 1);
        lr.rate = 2;
        let err = split_query_gallery(&[lr], 0).unwrap_err();
        assert!(err.to_string().contains('7'), "{err}");
    }

    #[test]
    fn triplet_batch_constraints() {
        let recs = toy();
        let mut rng = derive_rng(1, &[stream::BATCH, 0]);
        let batch = sample_triplet_batch(&recs, 4, 4, &mut rng).unwrap();
        assert_eq!(batch.indices.len(), 16);
        assert_eq!(batch.triples.len(), 16);
        for &(a, p, n) in &batch.triples {
            let (ia, ip, in_) = (
                recs[batch.indices[a]].identity,
                recs[batch.indices[p]].identity,
                recs[batch.indices[n]].identity,
            );
            assert_eq!(ia, ip);
            assert_ne!(a, p, "positive must be a different image");
            assert_ne!(ia, in_);
        }
    }

    #[test]
    fn triplet_batch_forced_negative() {
        let recs = make_toy_corpus(2, 4, 16, 3).unwrap();
        let mut rng = derive_rng(2, &[stream::BATCH, 1]);
        let batch = sample_triplet_batch(&recs, 2, 2, &mut rng).unwrap();
        for &(a, _, n) in &batch.triples {
            assert_ne!(
                recs[batch.indices[a]].identity,
                recs[batch.indices[n]].identity
            );
        }
    }

    #[test]
    fn triplet_batch_covers_all_identities_eventually() {
        let recs = make_toy_corpus(8, 4, 16, 21).unwrap();
        let mut seen = BTreeSet::new();
        for step in 0..1000 {
            let mut rng = derive_rng(4, &[stream::BATCH, step]);
            let batch = sample_triplet_batch(&recs, 4, 2, &mut rng).unwrap();
            for &i in &batch.indices {
                seen.insert(recs[i].identity);
            }
            if seen.len() == 8 {
                return;
            }
        }
        panic!("only {} of 8 identities sampled in 1000 batches", seen.len());
    }

    #[test]
    fn triplet_batch_rejects_small_pools() {
        let recs = make_toy_corpus(3, 2, 16, 1).unwrap();
        let mut rng = derive_rng(0, &[0]);
        assert!(sample_triplet_batch(&recs, 4, 2, &mut rng).is_err());
        assert!(sample_triplet_batch(&recs, 2, 3, &mut rng).is_err());
        assert!(sample_triplet_batch(&recs, 1, 2, &mut rng).is_err());
    }

    #[test]
    fn mask_label_counts() {
        let recs = toy();
        assert_eq!(recs.len(), 60);
        let all = mask_labels(&recs, 1.0, 0).unwrap();
        assert!(all.iter().all(|r| r.labeled));
        let none = mask_labels(&recs, 0.0, 0).unwrap();
        assert!(none.iter().all(|r| !r.labeled));
        let some = mask_labels(&recs, 0.2, 0).unwrap();
        assert_eq!(some.iter().filter(|r| r.labeled).count(), 12);
        assert!(mask_labels(&recs, 1.5, 0).is_err());

        // 160 records at fraction 0.2 -> exactly 32 labeled
        let big = make_toy_corpus(20, 8, 16, 2).unwrap();
        let masked = mask_labels(&big, 0.2, 5).unwrap();
        assert_eq!(masked.iter().filter(|r| r.labeled).count(), 32);
    }

    #[test]
    fn mask_labels_identity_stratified_and_deterministic() {
        let recs = toy(); // 10 identities x 6 images
        let masked = mask_labels(&recs, 0.5, 8).unwrap();
        let mut per_id: BTreeMap<usize, usize> = BTreeMap::new();
        for r in masked.iter().filter(|r| r.labeled) {
            *per_id.entry(r.identity).or_default() += 1;
        }
        // every identity keeps exactly half its images labeled
        assert_eq!(per_id.len(), 10);
        assert!(per_id.values().all(|&c| c == 3));

        let again = mask_labels(&recs, 0.5, 8).unwrap();
        for (a, b) in masked.iter().zip(again.iter()) {
            assert_eq!(a.labeled, b.labeled);
        }
    }
}
