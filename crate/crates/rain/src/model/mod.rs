//! The four trainable components and their parameter registry.
//!
//! Extractor, decoder, discriminators, and classifier own disjoint
//! parameter sets addressed by stable dotted names, which is what makes
//! the alternating min-max updates auditable: each sub-update touches
//! one side's names only.

mod checkpoint;
mod classifier;
mod config;
mod decoder;
mod discriminator;
mod extractor;

pub use checkpoint::{diff_tensor_maps, ModelState, TensorData};
pub use classifier::Classifier;
pub use config::ModelConfig;
pub use decoder::Decoder;
pub use discriminator::Discriminator;
pub use extractor::Extractor;

use ndarray::{Array1, Array2, Array4};
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::losses::{sigmoid, softmax};
use crate::nn::{global_avg_pool, BufferVisitor, ParamVisitor};
use crate::rng::{derive_rng, stream};

/// Per-level feature maps of one forward pass plus the pooled embedding.
///
/// `maps[j-1]` is the output of residual block `j`; `embedding` is the
/// spatial mean of the deepest map.
#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    pub maps: Vec<Array4<f64>>,
    pub embedding: Array2<f64>,
}

/// Spatial mean of the deepest feature map; the retrieval embedding.
pub fn pool_embedding(f_last: &Array4<f64>) -> Array2<f64> {
    global_avg_pool(f_last)
}

/// The component a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Extractor,
    Decoder,
    Discriminators,
    Classifier,
}

/// The three components updated together against the discriminators.
pub const GENERATOR_GROUPS: [ParamGroup; 3] = [
    ParamGroup::Extractor,
    ParamGroup::Decoder,
    ParamGroup::Classifier,
];

/// Logit clamp so `discriminate` stays strictly inside (0, 1) in f64.
const LOGIT_CLAMP: f64 = 30.0;

pub struct RainModel {
    pub config: ModelConfig,
    pub extractor: Extractor,
    pub decoder: Decoder,
    pub discriminators: BTreeMap<usize, Discriminator>,
    pub classifier: Classifier,
}

impl RainModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = derive_rng(seed, &[stream::MODEL_INIT]);
        let extractor = Extractor::new(config.stem_channels, &config.block_channels, &mut rng);
        let decoder = Decoder::new(config.embedding_dim(), &config.decoder_channels, &mut rng);
        let mut discriminators = BTreeMap::new();
        for &level in &config.discriminator_levels {
            discriminators.insert(
                level,
                Discriminator::new(config.level_channels(level), &config.disc_channels, &mut rng),
            );
        }
        let classifier = Classifier::new(config.embedding_dim(), config.num_identities);
        Ok(RainModel {
            config,
            extractor,
            decoder,
            discriminators,
            classifier,
        })
    }

    fn check_input(&self, x: &Array4<f64>) -> Result<()> {
        let (_, c, h, w) = x.dim();
        if c != 3 || h != self.config.input_h || w != self.config.input_w {
            return Err(Error::invalid(format!(
                "input {c}x{h}x{w} does not match configured 3x{}x{}",
                self.config.input_h, self.config.input_w
            )));
        }
        Ok(())
    }

    /// Training-mode forward: batch statistics, caches kept for backward.
    pub fn extract_train(&mut self, x: &Array4<f64>) -> Result<FeaturePyramid> {
        self.check_input(x)?;
        let maps = self.extractor.forward_train(x);
        let embedding = pool_embedding(maps.last().expect("at least one block"));
        Ok(FeaturePyramid { maps, embedding })
    }

    /// Inference-mode forward: frozen statistics, no state mutation.
    pub fn extract(&self, x: &Array4<f64>) -> Result<FeaturePyramid> {
        self.check_input(x)?;
        let maps = self.extractor.forward_eval(x);
        let embedding = pool_embedding(maps.last().expect("at least one block"));
        Ok(FeaturePyramid { maps, embedding })
    }

    /// Decode the deepest feature map back to image space (inference).
    pub fn decode(&self, f_last: &Array4<f64>) -> Result<Array4<f64>> {
        let (_, c, h, w) = f_last.dim();
        let j = self.config.num_blocks();
        let (eh, ew) = self.config.level_spatial(j);
        if c != self.config.embedding_dim() || h != eh || w != ew {
            return Err(Error::invalid(format!(
                "decoder input {c}x{h}x{w} does not match configured {}x{eh}x{ew}",
                self.config.embedding_dim()
            )));
        }
        Ok(self.decoder.forward_eval(f_last))
    }

    /// Probability that each feature map came from an HR image,
    /// strictly inside (0, 1).
    pub fn discriminate(&self, level: usize, f: &Array4<f64>) -> Result<Array1<f64>> {
        let disc = self.discriminators.get(&level).ok_or_else(|| {
            Error::invalid(format!(
                "no discriminator at level {level}; configured: {:?}",
                self.config.discriminator_levels
            ))
        })?;
        let (_, c, h, w) = f.dim();
        let (eh, ew) = self.config.level_spatial(level);
        if c != self.config.level_channels(level) || h != eh || w != ew {
            return Err(Error::invalid(format!(
                "level-{level} feature {c}x{h}x{w} does not match configured {}x{eh}x{ew}",
                self.config.level_channels(level)
            )));
        }
        let logits = disc.forward_eval(f);
        Ok(logits.mapv(|z| sigmoid(z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP))))
    }

    /// Identity probabilities for one embedding vector.
    pub fn classify(&self, v: &Array1<f64>) -> Result<Array1<f64>> {
        if v.len() != self.config.embedding_dim() {
            return Err(Error::invalid(format!(
                "embedding length {} does not match configured {}",
                v.len(),
                self.config.embedding_dim()
            )));
        }
        Ok(self.classifier.predict(v))
    }

    /// Probabilities for a batch of embeddings (inference mode).
    pub fn classify_batch(&self, v: &Array2<f64>) -> Result<Array2<f64>> {
        if v.ncols() != self.config.embedding_dim() {
            return Err(Error::invalid(format!(
                "embedding width {} does not match configured {}",
                v.ncols(),
                self.config.embedding_dim()
            )));
        }
        let logits = self.classifier.logits_eval(v);
        let mut out = Array2::zeros(logits.raw_dim());
        for (mut row, lrow) in out.outer_iter_mut().zip(logits.outer_iter()) {
            row.assign(&softmax(lrow));
        }
        Ok(out)
    }

    pub fn visit_group(&mut self, group: ParamGroup, f: &mut ParamVisitor) {
        match group {
            ParamGroup::Extractor => self.extractor.visit_params("extractor", f),
            ParamGroup::Decoder => self.decoder.visit_params("decoder", f),
            ParamGroup::Discriminators => {
                for (level, d) in self.discriminators.iter_mut() {
                    d.visit_params(&format!("discriminator.level{level}"), f);
                }
            }
            ParamGroup::Classifier => self.classifier.visit_params("classifier", f),
        }
    }

    pub fn visit_groups(&mut self, groups: &[ParamGroup], f: &mut ParamVisitor) {
        for &g in groups {
            self.visit_group(g, f);
        }
    }

    pub fn visit_all_params(&mut self, f: &mut ParamVisitor) {
        self.visit_groups(
            &[
                ParamGroup::Extractor,
                ParamGroup::Decoder,
                ParamGroup::Discriminators,
                ParamGroup::Classifier,
            ],
            f,
        );
    }

    pub fn visit_buffers(&mut self, f: &mut BufferVisitor) {
        self.extractor.visit_buffers("extractor", f);
        self.decoder.visit_buffers("decoder", f);
    }

    pub fn param_names(&mut self, group: ParamGroup) -> BTreeSet<String> {
        let mut names = BTreeSet::new();
        self.visit_group(group, &mut |name, _| {
            names.insert(name.to_string());
        });
        names
    }

    pub fn zero_group_grads(&mut self, groups: &[ParamGroup]) {
        for &g in groups {
            match g {
                ParamGroup::Extractor => self.extractor.zero_grad(),
                ParamGroup::Decoder => self.decoder.zero_grad(),
                ParamGroup::Discriminators => {
                    for d in self.discriminators.values_mut() {
                        d.zero_grad();
                    }
                }
                ParamGroup::Classifier => self.classifier.zero_grad(),
            }
        }
    }

    /// Flat copy of a group set's parameter values, for bitwise audits.
    pub fn snapshot(&mut self, groups: &[ParamGroup]) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_groups(groups, &mut |_, p| {
            out.extend(p.value.iter().copied());
        });
        out
    }

    pub fn all_params_finite(&mut self) -> bool {
        let mut ok = true;
        self.visit_all_params(&mut |_, p| {
            if p.value.iter().any(|v| !v.is_finite()) {
                ok = false;
            }
        });
        ok
    }

    pub fn to_state(&mut self) -> ModelState {
        let mut params = BTreeMap::new();
        self.visit_all_params(&mut |name, p| {
            params.insert(name.to_string(), TensorData::from_view(&p.value));
        });
        let mut buffers = BTreeMap::new();
        self.visit_buffers(&mut |name, b| {
            buffers.insert(name.to_string(), TensorData::from_view(&b.value));
        });
        ModelState {
            config: self.config.clone(),
            params,
            buffers,
        }
    }

    pub fn from_state(state: &ModelState) -> Result<Self> {
        let mut model = RainModel::new(state.config.clone(), 0)?;
        let problems = {
            let own = model.to_state();
            let mut problems = diff_tensor_maps(&own.params, &state.params);
            problems.extend(diff_tensor_maps(&own.buffers, &state.buffers));
            problems
        };
        if !problems.is_empty() {
            return Err(Error::Checkpoint(format!(
                "checkpoint does not fit its config:\n  {}",
                problems.join("\n  ")
            )));
        }
        let mut result = Ok(());
        model.visit_all_params(&mut |name, mut p| {
            if result.is_ok() {
                result = state.params[name].assign_to(name, &mut p.value);
            }
        });
        result?;
        let mut result = Ok(());
        model.visit_buffers(&mut |name, mut b| {
            if result.is_ok() {
                result = state.buffers[name].assign_to(name, &mut b.value);
            }
        });
        result?;
        Ok(model)
    }

    /// Load with a caller-required config; mismatches are a hard error
    /// listing the differing parameter names and shapes.
    pub fn from_state_expecting(state: &ModelState, expected: &ModelConfig) -> Result<Self> {
        if &state.config != expected {
            let mut expected_model = RainModel::new(expected.clone(), 0)?;
            let own = expected_model.to_state();
            let mut problems = diff_tensor_maps(&own.params, &state.params);
            problems.extend(diff_tensor_maps(&own.buffers, &state.buffers));
            if problems.is_empty() {
                problems.push("configs differ in non-structural fields".into());
            }
            return Err(Error::Checkpoint(format!(
                "checkpoint config does not match the expected config:\n  {}",
                problems.join("\n  ")
            )));
        }
        Self::from_state(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;
    use rand::Rng;

    fn toy_model(seed: u64) -> RainModel {
        RainModel::new(ModelConfig::toy(10), seed).unwrap()
    }

    fn random_batch(n: usize, seed: u64) -> Array4<f64> {
        let mut rng = derive_rng(seed, &[1000]);
        Array4::from_shape_fn((n, 3, 32, 32), |_| rng.random::<f64>())
    }

    #[test]
    fn pyramid_shapes_match_architecture() {
        let model = toy_model(1);
        let x = random_batch(2, 5);
        let pyr = model.extract(&x).unwrap();
        assert_eq!(pyr.maps.len(), 2);
        assert_eq!(pyr.maps[0].dim(), (2, 16, 16, 16));
        assert_eq!(pyr.maps[1].dim(), (2, 32, 8, 8));
        assert_eq!(pyr.embedding.dim(), (2, 32));
    }

    #[test]
    fn embedding_is_pooled_last_map() {
        let model = toy_model(2);
        let x = random_batch(1, 6);
        let pyr = model.extract(&x).unwrap();
        let pooled = pool_embedding(&pyr.maps[1]);
        assert_eq!(pyr.embedding, pooled);
    }

    #[test]
    fn inference_deterministic() {
        let model = toy_model(3);
        let x = random_batch(2, 7);
        let a = model.extract(&x).unwrap();
        let b = model.extract(&x).unwrap();
        assert_eq!(a.embedding, b.embedding);
        for (m1, m2) in a.maps.iter().zip(b.maps.iter()) {
            assert_eq!(m1, m2);
        }
    }

    #[test]
    fn extract_rejects_wrong_shape() {
        let model = toy_model(4);
        let x = Array4::zeros((1, 3, 16, 16));
        assert!(model.extract(&x).is_err());
    }

    #[test]
    fn decoder_output_shape() {
        let model = toy_model(5);
        let f = Array4::zeros((2, 32, 8, 8));
        let img = model.decode(&f).unwrap();
        assert_eq!(img.dim(), (2, 3, 32, 32));
        assert!(model.decode(&Array4::zeros((1, 16, 8, 8))).is_err());
    }

    #[test]
    fn discriminate_zero_input_gives_half() {
        let model = toy_model(6);
        let f = Array4::zeros((3, 32, 8, 8));
        let p = model.discriminate(2, &f).unwrap();
        for &prob in p.iter() {
            assert!((prob - 0.5).abs() < 1e-12);
        }
        assert!(model.discriminate(5, &f).is_err());
    }

    #[test]
    fn discriminate_stays_strictly_inside_unit_interval() {
        let mut model = toy_model(7);
        // inflate the head so raw logits would saturate
        model.visit_group(ParamGroup::Discriminators, &mut |name, mut p| {
            if name.ends_with("head.weight") {
                p.value.mapv_inplace(|v| v * 1e6);
            }
        });
        let mut rng = derive_rng(8, &[2]);
        let f = Array4::from_shape_fn((4, 32, 8, 8), |_| rng.random::<f64>() * 10.0);
        let p = model.discriminate(2, &f).unwrap();
        for &prob in p.iter() {
            assert!(prob > 0.0 && prob < 1.0, "prob {prob} left (0,1)");
        }
    }

    #[test]
    fn classify_uniform_at_zero_init_and_normalized() {
        let model = toy_model(8);
        let v = Array1::from_elem(32, 0.3);
        let p = model.classify(&v).unwrap();
        assert_eq!(p.len(), 10);
        for &prob in p.iter() {
            assert!((prob - 0.1).abs() < 1e-12);
        }
        let mut rng = derive_rng(9, &[3]);
        let v = Array1::from_shape_fn(32, |_| rng.random::<f64>() * 4.0 - 2.0);
        let p = model.classify(&v).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-6);
        assert!(p.iter().all(|&x| x >= 0.0));
        assert!(model.classify(&Array1::zeros(16)).is_err());
    }

    #[test]
    fn parameter_groups_are_disjoint_and_complete() {
        let mut model = toy_model(9);
        let groups = [
            ParamGroup::Extractor,
            ParamGroup::Decoder,
            ParamGroup::Discriminators,
            ParamGroup::Classifier,
        ];
        let sets: Vec<_> = groups.iter().map(|&g| model.param_names(g)).collect();
        for i in 0..sets.len() {
            for j in (i + 1)..sets.len() {
                assert!(
                    sets[i].is_disjoint(&sets[j]),
                    "groups {i} and {j} share parameter names"
                );
            }
        }
        let total: usize = sets.iter().map(|s| s.len()).sum();
        let mut all = BTreeSet::new();
        model.visit_all_params(&mut |name, _| {
            all.insert(name.to_string());
        });
        assert_eq!(all.len(), total);
    }

    #[test]
    fn same_seed_same_init() {
        let mut a = toy_model(42);
        let mut b = toy_model(42);
        assert_eq!(a.snapshot(&GENERATOR_GROUPS), b.snapshot(&GENERATOR_GROUPS));
        let mut c = toy_model(43);
        assert_ne!(a.snapshot(&GENERATOR_GROUPS), c.snapshot(&GENERATOR_GROUPS));
    }

    #[test]
    fn state_round_trip_bitwise() {
        let mut model = toy_model(10);
        // move running stats off their defaults
        let x = random_batch(4, 11);
        let _ = model.extract_train(&x).unwrap();
        let state = model.to_state();
        let mut rebuilt = RainModel::from_state(&state).unwrap();
        assert_eq!(model.snapshot(&GENERATOR_GROUPS), rebuilt.snapshot(&GENERATOR_GROUPS));
        let probe = random_batch(2, 12);
        let a = model.extract(&probe).unwrap();
        let b = rebuilt.extract(&probe).unwrap();
        assert_eq!(a.embedding, b.embedding);
    }

    #[test]
    fn mismatched_config_load_lists_names() {
        let mut model = toy_model(11);
        let state = model.to_state();
        let other = ModelConfig {
            block_channels: vec![16, 64],
            decoder_channels: vec![16, 8],
            ..ModelConfig::toy(10)
        };
        let err = RainModel::from_state_expecting(&state, &other).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("block2"), "should name mismatched params: {msg}");
    }
}
