//! Architecture configuration.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Shape of the four trainable components.
///
/// The extractor is a stem convolution followed by `block_channels.len()`
/// residual blocks, each halving the spatial size; the paper-scale
/// variant uses five blocks, the desk-scale reference two. Feature
/// levels are 1-based block indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_h: usize,
    pub input_w: usize,
    pub stem_channels: usize,
    /// Output channels of each residual block; the last is the
    /// embedding dimension.
    pub block_channels: Vec<usize>,
    /// Output channels of each decoder stage (same count as blocks).
    pub decoder_channels: Vec<usize>,
    /// Conv widths of each discriminator: exactly two strided convs.
    pub disc_channels: Vec<usize>,
    /// Feature levels that get a discriminator.
    pub discriminator_levels: BTreeSet<usize>,
    /// Identity vocabulary size of the classifier head.
    pub num_identities: usize,
}

impl ModelConfig {
    /// Desk-scale reference: 32x32 inputs, two blocks, 32-d embedding.
    pub fn toy(num_identities: usize) -> Self {
        ModelConfig {
            input_h: 32,
            input_w: 32,
            stem_channels: 8,
            block_channels: vec![16, 32],
            decoder_channels: vec![16, 8],
            disc_channels: vec![24, 32],
            discriminator_levels: [1, 2].into_iter().collect(),
            num_identities,
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.block_channels.len()
    }

    pub fn embedding_dim(&self) -> usize {
        *self.block_channels.last().expect("validated non-empty")
    }

    /// Channels of the feature map at 1-based level `j`.
    pub fn level_channels(&self, level: usize) -> usize {
        self.block_channels[level - 1]
    }

    /// Spatial size of the feature map at 1-based level `j`.
    pub fn level_spatial(&self, level: usize) -> (usize, usize) {
        (self.input_h >> level, self.input_w >> level)
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_channels.is_empty() {
            return Err(Error::Config("block_channels is empty".into()));
        }
        if self.decoder_channels.len() != self.num_blocks() {
            return Err(Error::Config(format!(
                "decoder_channels has {} entries for {} blocks",
                self.decoder_channels.len(),
                self.num_blocks()
            )));
        }
        if self.disc_channels.len() != 2 {
            return Err(Error::Config(format!(
                "disc_channels needs exactly 2 entries, got {}",
                self.disc_channels.len()
            )));
        }
        if self.discriminator_levels.is_empty() {
            return Err(Error::Config("discriminator_levels is empty".into()));
        }
        for &j in &self.discriminator_levels {
            if j == 0 || j > self.num_blocks() {
                return Err(Error::Config(format!(
                    "discriminator level {j} outside 1..={}",
                    self.num_blocks()
                )));
            }
        }
        let stride_total = 1usize << self.num_blocks();
        if self.input_h % stride_total != 0 || self.input_w % stride_total != 0 {
            return Err(Error::Config(format!(
                "input {}x{} not divisible by total stride {stride_total}",
                self.input_h, self.input_w
            )));
        }
        if self.stem_channels == 0 || self.block_channels.iter().any(|&c| c == 0) {
            return Err(Error::Config("zero channel count".into()));
        }
        if self.num_identities < 2 {
            return Err(Error::Config(format!(
                "num_identities {} < 2",
                self.num_identities
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_config_valid() {
        let cfg = ModelConfig::toy(20);
        cfg.validate().unwrap();
        assert_eq!(cfg.num_blocks(), 2);
        assert_eq!(cfg.embedding_dim(), 32);
        assert_eq!(cfg.level_spatial(2), (8, 8));
    }

    #[test]
    fn bad_configs_rejected() {
        let mut cfg = ModelConfig::toy(20);
        cfg.discriminator_levels = [3].into_iter().collect();
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::toy(20);
        cfg.input_h = 30;
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::toy(20);
        cfg.discriminator_levels.clear();
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::toy(20);
        cfg.decoder_channels = vec![8];
        assert!(cfg.validate().is_err());
    }
}
