//! Identity classifier over the pooled embedding.

use ndarray::{Array1, Array2};

use crate::losses::softmax;
use crate::nn::{Linear, ParamVisitor};

/// Single linear head, zero-initialized so the initial prediction is
/// uniform over identities.
pub struct Classifier {
    head: Linear,
    num_classes: usize,
}

impl Classifier {
    pub fn new(embedding_dim: usize, num_classes: usize) -> Self {
        Classifier {
            head: Linear::new_zeroed(embedding_dim, num_classes),
            num_classes,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn logits_train(&mut self, v: &Array2<f64>) -> Array2<f64> {
        self.head.forward_train(v)
    }

    pub fn logits_eval(&self, v: &Array2<f64>) -> Array2<f64> {
        self.head.forward_eval(v)
    }

    /// Class probabilities for one embedding.
    pub fn predict(&self, v: &Array1<f64>) -> Array1<f64> {
        let batch = v.view().insert_axis(ndarray::Axis(0)).to_owned();
        let logits = self.head.forward_eval(&batch);
        softmax(logits.row(0))
    }

    /// Gradient w.r.t. the embedding batch.
    pub fn backward(&mut self, grad_logits: &Array2<f64>) -> Array2<f64> {
        self.head.backward(grad_logits, true)
    }

    pub fn zero_grad(&mut self) {
        self.head.zero_grad();
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor) {
        self.head.visit_params(&format!("{prefix}.head"), f);
    }
}
