//! Cross-resolution feature extractor: stem + strided residual blocks.

use ndarray::Array4;
use rand_chacha::ChaCha8Rng;

use crate::nn::{Activation, BatchNorm2d, BufferVisitor, Conv2d, ParamVisitor};

/// Basic residual block with a stride-2 projection skip.
struct ResBlock {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    relu1: Activation,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    skip_conv: Conv2d,
    skip_bn: BatchNorm2d,
    relu_out: Activation,
}

impl ResBlock {
    fn new(c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) -> Self {
        ResBlock {
            conv1: Conv2d::new(c_in, c_out, 3, 2, 1, rng),
            bn1: BatchNorm2d::new(c_out),
            relu1: Activation::relu(),
            conv2: Conv2d::new(c_out, c_out, 3, 1, 1, rng),
            bn2: BatchNorm2d::new(c_out),
            skip_conv: Conv2d::new(c_in, c_out, 1, 2, 0, rng),
            skip_bn: BatchNorm2d::new(c_out),
            relu_out: Activation::relu(),
        }
    }

    fn forward_train(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let main = self.bn2.forward_train(
            &self
                .conv2
                .forward_train(&self.relu1.forward_train(&self.bn1.forward_train(
                    &self.conv1.forward_train(x),
                ))),
        );
        let skip = self.skip_bn.forward_train(&self.skip_conv.forward_train(x));
        self.relu_out.forward_train(&(main + skip))
    }

    fn forward_eval(&self, x: &Array4<f64>) -> Array4<f64> {
        let main = self.bn2.forward_eval(
            &self
                .conv2
                .forward_eval(&self.relu1.forward_eval(&self.bn1.forward_eval(
                    &self.conv1.forward_eval(x),
                ))),
        );
        let skip = self.skip_bn.forward_eval(&self.skip_conv.forward_eval(x));
        self.relu_out.forward_eval(&(main + skip))
    }

    fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let g = self.relu_out.backward(grad_out);
        let g_main = self
            .conv1
            .backward(
                &self.bn1.backward(&self.relu1.backward(
                    &self.conv2.backward(&self.bn2.backward(&g), true),
                )),
                true,
            );
        let g_skip = self
            .skip_conv
            .backward(&self.skip_bn.backward(&g), true);
        g_main + g_skip
    }

    fn zero_grad(&mut self) {
        self.conv1.zero_grad();
        self.bn1.zero_grad();
        self.conv2.zero_grad();
        self.bn2.zero_grad();
        self.skip_conv.zero_grad();
        self.skip_bn.zero_grad();
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor) {
        self.conv1.visit_params(&format!("{prefix}.conv1"), f);
        self.bn1.visit_params(&format!("{prefix}.bn1"), f);
        self.conv2.visit_params(&format!("{prefix}.conv2"), f);
        self.bn2.visit_params(&format!("{prefix}.bn2"), f);
        self.skip_conv.visit_params(&format!("{prefix}.skip_conv"), f);
        self.skip_bn.visit_params(&format!("{prefix}.skip_bn"), f);
    }

    fn visit_buffers(&mut self, prefix: &str, f: &mut BufferVisitor) {
        self.bn1.visit_buffers(&format!("{prefix}.bn1"), f);
        self.bn2.visit_buffers(&format!("{prefix}.bn2"), f);
        self.skip_bn.visit_buffers(&format!("{prefix}.skip_bn"), f);
    }
}

pub struct Extractor {
    stem_conv: Conv2d,
    stem_bn: BatchNorm2d,
    stem_relu: Activation,
    blocks: Vec<ResBlock>,
}

impl Extractor {
    pub fn new(stem_channels: usize, block_channels: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let stem_conv = Conv2d::new(3, stem_channels, 3, 1, 1, rng);
        let mut blocks = Vec::with_capacity(block_channels.len());
        let mut c_in = stem_channels;
        for &c_out in block_channels {
            blocks.push(ResBlock::new(c_in, c_out, rng));
            c_in = c_out;
        }
        Extractor {
            stem_conv,
            stem_bn: BatchNorm2d::new(stem_channels),
            stem_relu: Activation::relu(),
            blocks,
        }
    }

    /// Per-block feature maps, shallowest first.
    pub fn forward_train(&mut self, x: &Array4<f64>) -> Vec<Array4<f64>> {
        let mut cur = self
            .stem_relu
            .forward_train(&self.stem_bn.forward_train(&self.stem_conv.forward_train(x)));
        let mut maps = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            cur = block.forward_train(&cur);
            maps.push(cur.clone());
        }
        maps
    }

    pub fn forward_eval(&self, x: &Array4<f64>) -> Vec<Array4<f64>> {
        let mut cur = self
            .stem_relu
            .forward_eval(&self.stem_bn.forward_eval(&self.stem_conv.forward_eval(x)));
        let mut maps = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            cur = block.forward_eval(&cur);
            maps.push(cur.clone());
        }
        maps
    }

    /// Backward with one injected gradient per level (zeros where a level
    /// receives none). Returns the gradient w.r.t. the input image.
    pub fn backward(&mut self, level_grads: Vec<Array4<f64>>) -> Array4<f64> {
        assert_eq!(level_grads.len(), self.blocks.len(), "one grad per level");
        let mut grads = level_grads;
        let mut g = grads.pop().expect("at least one block");
        for i in (0..self.blocks.len()).rev() {
            g = self.blocks[i].backward(&g);
            if i > 0 {
                g += &grads.pop().expect("level grad");
            }
        }
        self.stem_conv.backward(
            &self.stem_bn.backward(&self.stem_relu.backward(&g)),
            true,
        )
    }

    pub fn zero_grad(&mut self) {
        self.stem_conv.zero_grad();
        self.stem_bn.zero_grad();
        for b in &mut self.blocks {
            b.zero_grad();
        }
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor) {
        self.stem_conv.visit_params(&format!("{prefix}.stem.conv"), f);
        self.stem_bn.visit_params(&format!("{prefix}.stem.bn"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_params(&format!("{prefix}.block{}", i + 1), f);
        }
    }

    pub fn visit_buffers(&mut self, prefix: &str, f: &mut BufferVisitor) {
        self.stem_bn.visit_buffers(&format!("{prefix}.stem.bn"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_buffers(&format!("{prefix}.block{}", i + 1), f);
        }
    }
}
