//! Checkpoint state: named parameter arrays plus the config that shaped
//! them. JSON keeps f64 values bit-exact through serde's shortest
//! round-trip representation.

use ndarray::ArrayViewMutD;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::ModelConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl TensorData {
    pub fn from_view(view: &ArrayViewMutD<'_, f64>) -> Self {
        TensorData {
            shape: view.shape().to_vec(),
            data: view.iter().copied().collect(),
        }
    }

    pub fn assign_to(&self, name: &str, view: &mut ArrayViewMutD<'_, f64>) -> Result<()> {
        if view.shape() != self.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "shape mismatch for {name}: model {:?} vs checkpoint {:?}",
                view.shape(),
                self.shape
            )));
        }
        for (dst, &src) in view.iter_mut().zip(self.data.iter()) {
            *dst = src;
        }
        Ok(())
    }
}

/// Everything needed to rebuild a model bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: BTreeMap<String, TensorData>,
    pub buffers: BTreeMap<String, TensorData>,
}

/// Report every name present on one side only, plus shape clashes.
pub fn diff_tensor_maps(
    model_side: &BTreeMap<String, TensorData>,
    ckpt_side: &BTreeMap<String, TensorData>,
) -> Vec<String> {
    let mut problems = Vec::new();
    for (name, t) in model_side {
        match ckpt_side.get(name) {
            None => problems.push(format!("missing from checkpoint: {name} {:?}", t.shape)),
            Some(other) if other.shape != t.shape => problems.push(format!(
                "shape mismatch: {name} model {:?} vs checkpoint {:?}",
                t.shape, other.shape
            )),
            _ => {}
        }
    }
    for name in ckpt_side.keys() {
        if !model_side.contains_key(name) {
            problems.push(format!("unknown in checkpoint: {name}"));
        }
    }
    problems
}
