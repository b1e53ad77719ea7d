//! Per-level resolution discriminator.
//!
//! A small strided-conv stack over one feature map, pooled to a single
//! logit per image: positive means "extracted from an HR input". No
//! normalization layers; biases start at zero, so a zero feature map
//! yields a zero logit (probability one half) regardless of weights.

use ndarray::{Array1, Array2, Array4};
use rand_chacha::ChaCha8Rng;

use crate::nn::{
    global_avg_pool, global_avg_pool_backward, Activation, Conv2d, Linear, ParamVisitor,
};

pub struct Discriminator {
    conv1: Conv2d,
    leaky1: Activation,
    conv2: Conv2d,
    leaky2: Activation,
    head: Linear,
    pooled_spatial: Option<(usize, usize)>,
}

impl Discriminator {
    pub fn new(in_channels: usize, widths: &[usize], rng: &mut ChaCha8Rng) -> Self {
        Discriminator {
            conv1: Conv2d::new(in_channels, widths[0], 3, 2, 1, rng),
            leaky1: Activation::leaky(0.2),
            conv2: Conv2d::new(widths[0], widths[1], 3, 2, 1, rng),
            leaky2: Activation::leaky(0.2),
            head: Linear::new(widths[1], 1, rng),
            pooled_spatial: None,
        }
    }

    /// One logit per image.
    pub fn forward_train(&mut self, f: &Array4<f64>) -> Array1<f64> {
        let a = self.leaky1.forward_train(&self.conv1.forward_train(f));
        let b = self.leaky2.forward_train(&self.conv2.forward_train(&a));
        let (_, _, h, w) = b.dim();
        self.pooled_spatial = Some((h, w));
        let pooled = global_avg_pool(&b);
        let logits = self.head.forward_train(&pooled);
        logits.column(0).to_owned()
    }

    pub fn forward_eval(&self, f: &Array4<f64>) -> Array1<f64> {
        let a = self.leaky1.forward_eval(&self.conv1.forward_eval(f));
        let b = self.leaky2.forward_eval(&self.conv2.forward_eval(&a));
        let pooled = global_avg_pool(&b);
        self.head.forward_eval(&pooled).column(0).to_owned()
    }

    /// Gradient w.r.t. the input feature map. Parameter gradients are
    /// only touched when `accumulate` is set; the extractor's update
    /// runs with `false` so the min-max parameter sets stay disjoint.
    pub fn backward(&mut self, grad_logits: &Array1<f64>, accumulate: bool) -> Array4<f64> {
        let (h, w) = self.pooled_spatial.expect("forward_train before backward");
        let n = grad_logits.len();
        let g2 = Array2::from_shape_fn((n, 1), |(i, _)| grad_logits[i]);
        let g_pool = self.head.backward(&g2, accumulate);
        let g_map = global_avg_pool_backward(&g_pool, h, w);
        let g = self.conv2.backward(&self.leaky2.backward(&g_map), accumulate);
        self.conv1.backward(&self.leaky1.backward(&g), accumulate)
    }

    pub fn zero_grad(&mut self) {
        self.conv1.zero_grad();
        self.conv2.zero_grad();
        self.head.zero_grad();
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor) {
        self.conv1.visit_params(&format!("{prefix}.conv1"), f);
        self.conv2.visit_params(&format!("{prefix}.conv2"), f);
        self.head.visit_params(&format!("{prefix}.head"), f);
    }
}
