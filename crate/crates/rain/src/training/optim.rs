//! Adam optimizer over named parameter groups, with optional global-norm
//! gradient clipping. State is keyed by parameter name so it survives
//! checkpoint round trips bit-exactly.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::model::{ParamGroup, RainModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Apply one update to the given groups from their accumulated
    /// gradients. `clip` rescales the whole gradient vector to that
    /// global L2 norm when it is larger.
    pub fn step(&mut self, model: &mut RainModel, groups: &[ParamGroup], clip: Option<f64>) {
        let mut scale = 1.0;
        if let Some(max_norm) = clip {
            let mut sq = 0.0;
            model.visit_groups(groups, &mut |_, p| {
                sq += p.grad.iter().map(|g| g * g).sum::<f64>();
            });
            let norm = sq.sqrt();
            if norm > max_norm {
                scale = max_norm / norm;
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        let (m_map, v_map) = (&mut self.m, &mut self.v);
        model.visit_groups(groups, &mut |name, mut p| {
            let n = p.value.len();
            let m = m_map
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; n]);
            let v = v_map
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; n]);
            for ((val, g), (mi, vi)) in p
                .value
                .iter_mut()
                .zip(p.grad.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                let g = g * scale;
                *mi = b1 * *mi + (1.0 - b1) * g;
                *vi = b2 * *vi + (1.0 - b2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *val -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, GENERATOR_GROUPS};

    #[test]
    fn step_moves_only_requested_groups() {
        let mut model = RainModel::new(ModelConfig::toy(5), 0).unwrap();
        // plant a nonzero gradient everywhere
        model.visit_all_params(&mut |_, mut p| {
            p.grad.fill(0.5);
        });
        let disc_before = model.snapshot(&[ParamGroup::Discriminators]);
        let gen_before = model.snapshot(&GENERATOR_GROUPS);
        let mut opt = Adam::new(1e-2);
        opt.step(&mut model, &GENERATOR_GROUPS, None);
        assert_eq!(
            disc_before,
            model.snapshot(&[ParamGroup::Discriminators]),
            "discriminator parameters moved during a generator step"
        );
        assert_ne!(gen_before, model.snapshot(&GENERATOR_GROUPS));
    }

    #[test]
    fn clipping_caps_update_magnitude() {
        let mut model = RainModel::new(ModelConfig::toy(5), 1).unwrap();
        model.visit_group(ParamGroup::Classifier, &mut |_, mut p| {
            p.grad.fill(100.0);
        });
        let before = model.snapshot(&[ParamGroup::Classifier]);
        let mut opt = Adam::new(1e-3);
        opt.step(&mut model, &[ParamGroup::Classifier], Some(1.0));
        let after = model.snapshot(&[ParamGroup::Classifier]);
        // first-step magnitude is bounded by lr regardless; here we only
        // check the clipped path actually applied an update
        let mut replay = RainModel::new(ModelConfig::toy(5), 1).unwrap();
        let mut sq = 0.0;
        replay.visit_group(ParamGroup::Classifier, &mut |_, mut p| {
            p.grad.fill(100.0);
            sq += p.grad.iter().map(|g| g * g).sum::<f64>();
        });
        assert!(sq.sqrt() > 1.0);
        assert_ne!(before, after);
    }
}
