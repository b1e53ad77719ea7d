//! Dataset synthesis and sampling.
//!
//! Builds multi-low-resolution (MLR) datasets from high-resolution
//! sources: every image of a designated camera is down-sampled at a rate
//! drawn from a configured set and bilinearly resized back, keeping the
//! HR original as reconstruction ground truth. Also provides the
//! procedural toy-identity corpus, identity-level train/test splitting,
//! the single-shot query/gallery split, identity-balanced triplet
//! batches, and identity-stratified label masking for semi-supervised
//! runs.
//!
//! Everything here is a pure function of its inputs and an explicit
//! seed.

mod manifest;
mod mlr;
mod resize;
mod toy;

pub use manifest::{load_dataset, load_image_dir, save_dataset, ManifestRecord};
pub use mlr::{
    assign_lr_rates, mask_labels, sample_triplet_batch, split_query_gallery, synthesize_mlr,
    MlrOptions, TripletBatch,
};
pub use resize::{downsample_upsample, downsampled_size};
pub use toy::make_toy_corpus;

use ndarray::Array3;
use std::collections::BTreeSet;

/// One image with its identity annotation and resolution provenance.
///
/// `pixels` and `hr_pixels` always share the same H x W x 3 shape;
/// `rate == 1` means the record is native HR and the two are identical.
/// For synthesized LR records, `hr_pixels` keeps the ground truth the
/// decoder learns to reconstruct.
#[derive(Debug, Clone)]
pub struct ImageRecord {
    pub pixels: Array3<f64>,
    pub hr_pixels: Array3<f64>,
    pub identity: usize,
    pub camera: u32,
    pub rate: u32,
    /// Identity-supervision visibility for semi-supervised runs.
    pub labeled: bool,
}

impl ImageRecord {
    /// A native HR record: `pixels == hr_pixels`, `rate == 1`.
    pub fn hr(pixels: Array3<f64>, identity: usize, camera: u32) -> Self {
        ImageRecord {
            hr_pixels: pixels.clone(),
            pixels,
            identity,
            camera,
            rate: 1,
            labeled: true,
        }
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }
}

/// Train/query/gallery partitions with their identity vocabulary.
///
/// Train identities are disjoint from test identities; the gallery holds
/// exactly one HR record per test identity and every query is LR.
#[derive(Debug, Clone)]
pub struct MlrDataset {
    pub train: Vec<ImageRecord>,
    pub query: Vec<ImageRecord>,
    pub gallery: Vec<ImageRecord>,
    /// Size of the identity vocabulary (labels are indices below this).
    pub num_identities: usize,
    /// Down-sampling rates the synthesis drew from.
    pub rates_used: BTreeSet<u32>,
}

impl MlrDataset {
    pub fn query_identities(&self) -> BTreeSet<usize> {
        self.query.iter().map(|r| r.identity).collect()
    }

    pub fn train_identities(&self) -> BTreeSet<usize> {
        self.train.iter().map(|r| r.identity).collect()
    }

    pub fn num_test_identities(&self) -> usize {
        self.gallery.len()
    }
}
