//! HR decoder: upsampling conv stack from the deepest feature map back
//! to image space. It exists to keep the extractor's features
//! information-rich, not to produce display-quality output.

use ndarray::Array4;
use rand_chacha::ChaCha8Rng;

use crate::nn::{
    upsample2x, upsample2x_backward, Activation, BatchNorm2d, BufferVisitor, Conv2d, ParamVisitor,
};

struct Stage {
    conv: Conv2d,
    bn: BatchNorm2d,
    relu: Activation,
}

pub struct Decoder {
    stages: Vec<Stage>,
    final_conv: Conv2d,
}

impl Decoder {
    pub fn new(embedding_dim: usize, stage_channels: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut stages = Vec::with_capacity(stage_channels.len());
        let mut c_in = embedding_dim;
        for &c_out in stage_channels {
            stages.push(Stage {
                conv: Conv2d::new(c_in, c_out, 3, 1, 1, rng),
                bn: BatchNorm2d::new(c_out),
                relu: Activation::relu(),
            });
            c_in = c_out;
        }
        Decoder {
            stages,
            final_conv: Conv2d::new(c_in, 3, 3, 1, 1, rng),
        }
    }

    /// Decode the deepest feature map to an `(N, 3, H, W)` image batch;
    /// output values are unconstrained reals.
    pub fn forward_train(&mut self, f_last: &Array4<f64>) -> Array4<f64> {
        let mut cur = f_last.clone();
        for stage in &mut self.stages {
            cur = upsample2x(&stage.relu.forward_train(
                &stage.bn.forward_train(&stage.conv.forward_train(&cur)),
            ));
        }
        self.final_conv.forward_train(&cur)
    }

    pub fn forward_eval(&self, f_last: &Array4<f64>) -> Array4<f64> {
        let mut cur = f_last.clone();
        for stage in &self.stages {
            cur = upsample2x(&stage.relu.forward_eval(
                &stage.bn.forward_eval(&stage.conv.forward_eval(&cur)),
            ));
        }
        self.final_conv.forward_eval(&cur)
    }

    /// Gradient w.r.t. the deepest feature map.
    pub fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let mut g = self.final_conv.backward(grad_out, true);
        for stage in self.stages.iter_mut().rev() {
            g = stage.conv.backward(
                &stage.bn.backward(&stage.relu.backward(&upsample2x_backward(&g))),
                true,
            );
        }
        g
    }

    pub fn zero_grad(&mut self) {
        for s in &mut self.stages {
            s.conv.zero_grad();
            s.bn.zero_grad();
        }
        self.final_conv.zero_grad();
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor) {
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.conv.visit_params(&format!("{prefix}.stage{}.conv", i + 1), f);
            s.bn.visit_params(&format!("{prefix}.stage{}.bn", i + 1), f);
        }
        self.final_conv.visit_params(&format!("{prefix}.final"), f);
    }

    pub fn visit_buffers(&mut self, prefix: &str, f: &mut BufferVisitor) {
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.bn.visit_buffers(&format!("{prefix}.stage{}.bn", i + 1), f);
        }
    }
}
