//! 2-D convolution via im2col and a single batched GEMM.

use ndarray::{Array1, Array2, Array4};
use rand_chacha::ChaCha8Rng;

use super::init::fill_fan_in_uniform;
use super::param::{ParamMut, ParamVisitor};

pub struct Conv2d {
    /// Weight layout `(c_out, c_in, kh, kw)`.
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
    pub grad_weight: Array4<f64>,
    pub grad_bias: Array1<f64>,
    pub stride: usize,
    pub padding: usize,
    cache: Option<Cache>,
}

struct Cache {
    cols: Array2<f64>,
    in_dim: [usize; 4],
}

/// Unfold input patches into a `(c_in*kh*kw, n*h2*w2)` matrix; columns
/// are batch-major then row-major over output positions.
fn im2col(
    x: &Array4<f64>,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
) -> (Array2<f64>, usize, usize) {
    let (n, c_in, h, w) = x.dim();
    let h2 = (h + 2 * padding - kh) / stride + 1;
    let w2 = (w + 2 * padding - kw) / stride + 1;
    let l = h2 * w2;
    let mut cols = Array2::zeros((c_in * kh * kw, n * l));
    let xs = x.as_slice().expect("standard layout");
    let cs = cols.as_slice_mut().expect("standard layout");
    for r in 0..c_in * kh * kw {
        let c = r / (kh * kw);
        let ky = (r / kw) % kh;
        let kx = r % kw;
        let row_base = r * n * l;
        for ni in 0..n {
            let x_base = (ni * c_in + c) * h * w;
            for oy in 0..h2 {
                let iy = (oy * stride + ky) as isize - padding as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                let x_row = x_base + iy as usize * w;
                let col_row = row_base + ni * l + oy * w2;
                for ox in 0..w2 {
                    let ix = (ox * stride + kx) as isize - padding as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    cs[col_row + ox] = xs[x_row + ix as usize];
                }
            }
        }
    }
    (cols, h2, w2)
}

/// Scatter-add column gradients back to input positions.
fn col2im(
    dcols: &Array2<f64>,
    in_dim: [usize; 4],
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
) -> Array4<f64> {
    let [n, c_in, h, w] = in_dim;
    let h2 = (h + 2 * padding - kh) / stride + 1;
    let w2 = (w + 2 * padding - kw) / stride + 1;
    let l = h2 * w2;
    let mut gx = Array4::zeros((n, c_in, h, w));
    let gs = gx.as_slice_mut().expect("standard layout");
    let ds = dcols.as_slice().expect("standard layout");
    for r in 0..c_in * kh * kw {
        let c = r / (kh * kw);
        let ky = (r / kw) % kh;
        let kx = r % kw;
        let row_base = r * n * l;
        for ni in 0..n {
            let x_base = (ni * c_in + c) * h * w;
            for oy in 0..h2 {
                let iy = (oy * stride + ky) as isize - padding as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                let x_row = x_base + iy as usize * w;
                let col_row = row_base + ni * l + oy * w2;
                for ox in 0..w2 {
                    let ix = (ox * stride + kx) as isize - padding as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    gs[x_row + ix as usize] += ds[col_row + ox];
                }
            }
        }
    }
    gx
}

impl Conv2d {
    pub fn new(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut weight = Array4::zeros((c_out, c_in, kernel, kernel));
        fill_fan_in_uniform(
            weight.as_slice_mut().unwrap(),
            c_in * kernel * kernel,
            rng,
        );
        Conv2d {
            grad_weight: Array4::zeros(weight.raw_dim()),
            weight,
            bias: Array1::zeros(c_out),
            grad_bias: Array1::zeros(c_out),
            stride,
            padding,
            cache: None,
        }
    }

    fn kernel(&self) -> (usize, usize) {
        let d = self.weight.dim();
        (d.2, d.3)
    }

    fn run(&self, x: &Array4<f64>) -> (Array2<f64>, Array4<f64>) {
        let (c_out, c_in, kh, kw) = self.weight.dim();
        let (n, xc, _, _) = x.dim();
        assert_eq!(xc, c_in, "conv input channels");
        let (cols, h2, w2) = im2col(x, kh, kw, self.stride, self.padding);
        let k = c_in * kh * kw;
        let w2d = self
            .weight
            .to_shape((c_out, k))
            .expect("contiguous weight");
        let y2 = w2d.dot(&cols); // (c_out, n*l)
        let l = h2 * w2;
        let mut out = Array4::zeros((n, c_out, h2, w2));
        {
            let os = out.as_slice_mut().unwrap();
            let ys = y2.as_slice().unwrap();
            for ni in 0..n {
                for co in 0..c_out {
                    let b = self.bias[co];
                    let dst = (ni * c_out + co) * l;
                    let src = co * n * l + ni * l;
                    for i in 0..l {
                        os[dst + i] = ys[src + i] + b;
                    }
                }
            }
        }
        (cols, out)
    }

    pub fn forward_train(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let (cols, out) = self.run(x);
        let (n, c, h, w) = x.dim();
        self.cache = Some(Cache {
            cols,
            in_dim: [n, c, h, w],
        });
        out
    }

    pub fn forward_eval(&self, x: &Array4<f64>) -> Array4<f64> {
        self.run(x).1
    }

    /// Propagate gradients to the input; parameter gradients are
    /// accumulated only when `accumulate` is set (the discriminator is
    /// run with `false` during the extractor's update).
    pub fn backward(&mut self, grad_out: &Array4<f64>, accumulate: bool) -> Array4<f64> {
        let cache = self.cache.as_ref().expect("forward_train before backward");
        let (c_out, c_in, kh, kw) = self.weight.dim();
        let (n, gc, h2, w2) = grad_out.dim();
        assert_eq!(gc, c_out, "conv grad channels");
        let l = h2 * w2;
        let k = c_in * kh * kw;

        // (c_out, n*l) with the same column order as im2col
        let mut g2 = Array2::zeros((c_out, n * l));
        {
            let gs = g2.as_slice_mut().unwrap();
            let go = grad_out.as_slice().unwrap();
            for ni in 0..n {
                for co in 0..c_out {
                    let src = (ni * c_out + co) * l;
                    let dst = co * n * l + ni * l;
                    gs[dst..dst + l].copy_from_slice(&go[src..src + l]);
                }
            }
        }

        if accumulate {
            let gw2 = g2.dot(&cache.cols.t()); // (c_out, k)
            for (dst, src) in self
                .grad_weight
                .as_slice_mut()
                .unwrap()
                .iter_mut()
                .zip(gw2.as_slice().unwrap())
            {
                *dst += src;
            }
            for co in 0..c_out {
                self.grad_bias[co] += g2.row(co).sum();
            }
        }

        let w2d = self
            .weight
            .to_shape((c_out, k))
            .expect("contiguous weight");
        let dcols = w2d.t().dot(&g2); // (k, n*l)
        col2im(&dcols, cache.in_dim, kh, kw, self.stride, self.padding)
    }

    pub fn out_spatial(&self, h: usize, w: usize) -> (usize, usize) {
        let (kh, kw) = self.kernel();
        (
            (h + 2 * self.padding - kh) / self.stride + 1,
            (w + 2 * self.padding - kw) / self.stride + 1,
        )
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(0.0);
        self.grad_bias.fill(0.0);
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor) {
        f(
            &format!("{prefix}.weight"),
            ParamMut {
                value: self.weight.view_mut().into_dyn(),
                grad: self.grad_weight.view_mut().into_dyn(),
            },
        );
        f(
            &format!("{prefix}.bias"),
            ParamMut {
                value: self.bias.view_mut().into_dyn(),
                grad: self.grad_bias.view_mut().into_dyn(),
            },
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use ndarray::Array4;
    use rand::Rng;

    #[test]
    fn identity_kernel_passthrough() {
        let mut rng = derive_rng(0, &[1]);
        let mut conv = Conv2d::new(1, 1, 1, 1, 0, &mut rng);
        conv.weight.fill(1.0);
        let x = Array4::from_shape_fn((2, 1, 4, 4), |_| rng.random::<f64>());
        let y = conv.forward_eval(&x);
        assert_eq!(y, x);
    }

    #[test]
    fn stride_two_halves_spatial() {
        let mut rng = derive_rng(0, &[2]);
        let conv = Conv2d::new(3, 8, 3, 2, 1, &mut rng);
        assert_eq!(conv.out_spatial(32, 32), (16, 16));
        assert_eq!(conv.out_spatial(1, 1), (1, 1));
        let x = Array4::zeros((1, 3, 32, 32));
        assert_eq!(conv.forward_eval(&x).dim(), (1, 8, 16, 16));
    }

    #[test]
    fn known_3x3_sum_kernel() {
        let mut rng = derive_rng(0, &[3]);
        let mut conv = Conv2d::new(1, 1, 3, 1, 1, &mut rng);
        conv.weight.fill(1.0);
        let x = Array4::from_elem((1, 1, 3, 3), 1.0);
        let y = conv.forward_eval(&x);
        // center cell sees all nine ones, corners see four
        assert_eq!(y[[0, 0, 1, 1]], 9.0);
        assert_eq!(y[[0, 0, 0, 0]], 4.0);
    }

    #[test]
    fn backward_matches_finite_difference() {
        let mut rng = derive_rng(0, &[4]);
        let mut conv = Conv2d::new(2, 3, 3, 2, 1, &mut rng);
        let x = Array4::from_shape_fn((2, 2, 5, 5), |_| rng.random::<f64>() - 0.5);
        // scalar loss: weighted sum of outputs
        let w = Array4::from_shape_fn(conv.forward_eval(&x).raw_dim(), |_| {
            rng.random::<f64>() - 0.5
        });
        let loss = |conv: &Conv2d, x: &Array4<f64>| -> f64 {
            (conv.forward_eval(x) * &w).sum()
        };
        let y = conv.forward_train(&x);
        assert_eq!(y.dim(), (2, 3, 3, 3));
        conv.zero_grad();
        let gx = conv.backward(&w, true);

        let eps = 1e-6;
        // input gradient
        let mut x_probe = x.clone();
        for &idx in &[[0usize, 0, 0, 0], [1, 1, 2, 3], [0, 1, 4, 4]] {
            x_probe[idx] = x[idx] + eps;
            let up = loss(&conv, &x_probe);
            x_probe[idx] = x[idx] - eps;
            let down = loss(&conv, &x_probe);
            x_probe[idx] = x[idx];
            let num = (up - down) / (2.0 * eps);
            assert!(
                (gx[idx] - num).abs() / num.abs().max(1.0) < 1e-7,
                "input grad {idx:?}: {} vs {num}",
                gx[idx]
            );
        }
        // weight gradient
        for &idx in &[[0usize, 0, 0, 0], [2, 1, 1, 2]] {
            let orig = conv.weight[idx];
            conv.weight[idx] = orig + eps;
            let up = loss(&conv, &x);
            conv.weight[idx] = orig - eps;
            let down = loss(&conv, &x);
            conv.weight[idx] = orig;
            let num = (up - down) / (2.0 * eps);
            assert!(
                (conv.grad_weight[idx] - num).abs() / num.abs().max(1.0) < 1e-7,
                "weight grad {idx:?}"
            );
        }
    }

    #[test]
    fn backward_without_accumulate_keeps_param_grads_zero() {
        let mut rng = derive_rng(0, &[5]);
        let mut conv = Conv2d::new(2, 2, 3, 1, 1, &mut rng);
        let x = Array4::from_shape_fn((1, 2, 4, 4), |_| rng.random::<f64>());
        let y = conv.forward_train(&x);
        conv.zero_grad();
        let _ = conv.backward(&Array4::from_elem(y.raw_dim(), 1.0), false);
        assert!(conv.grad_weight.iter().all(|&g| g == 0.0));
        assert!(conv.grad_bias.iter().all(|&g| g == 0.0));
    }
}
