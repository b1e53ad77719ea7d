//! RAIN: resolution adaptation and re-identification.
//!
//! Trains resolution-invariant image embeddings for cross-resolution
//! person re-identification. A shared feature extractor is supervised by
//! four signals: per-level discriminators that align high- and
//! low-resolution feature distributions adversarially, a decoder that
//! reconstructs the high-resolution ground truth, an identity classifier,
//! and a triplet margin loss on the pooled embedding. Evaluation follows
//! the single-shot protocol: low-resolution queries are ranked against a
//! high-resolution gallery holding one image per identity, scored by CMC
//! and mAP.

pub mod datagen;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
