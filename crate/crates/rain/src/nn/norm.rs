//! Per-channel batch normalization.
//!
//! Training normalizes with batch statistics and updates the running
//! estimates; evaluation uses the frozen running statistics only.

use ndarray::{Array1, Array4};

use super::param::{BufferMut, BufferVisitor, ParamMut, ParamVisitor};

pub struct BatchNorm2d {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub grad_gamma: Array1<f64>,
    pub grad_beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<Cache>,
}

struct Cache {
    xhat: Array4<f64>,
    inv_std: Array1<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            grad_gamma: Array1::zeros(channels),
            grad_beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn forward_train(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let m = (n * h * w) as f64;
        let mut out = Array4::zeros(x.raw_dim());
        let mut xhat = Array4::zeros(x.raw_dim());
        let mut inv_std = Array1::zeros(c);
        for ch in 0..c {
            let lane = x.slice(ndarray::s![.., ch, .., ..]);
            let mean = lane.sum() / m;
            let var = lane.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / m;
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std[ch] = istd;
            let (g, b) = (self.gamma[ch], self.beta[ch]);
            let mut xhat_lane = xhat.slice_mut(ndarray::s![.., ch, .., ..]);
            let mut out_lane = out.slice_mut(ndarray::s![.., ch, .., ..]);
            ndarray::Zip::from(&mut xhat_lane)
                .and(&mut out_lane)
                .and(&lane)
                .for_each(|xh, o, &v| {
                    *xh = (v - mean) * istd;
                    *o = g * *xh + b;
                });
            self.running_mean[ch] = (1.0 - self.momentum) * self.running_mean[ch] + self.momentum * mean;
            self.running_var[ch] = (1.0 - self.momentum) * self.running_var[ch] + self.momentum * var;
        }
        self.cache = Some(Cache { xhat, inv_std });
        out
    }

    pub fn forward_eval(&self, x: &Array4<f64>) -> Array4<f64> {
        let (_, c, _, _) = x.dim();
        let mut out = x.clone();
        for ch in 0..c {
            let istd = 1.0 / (self.running_var[ch] + self.eps).sqrt();
            let (mean, g, b) = (self.running_mean[ch], self.gamma[ch], self.beta[ch]);
            out.slice_mut(ndarray::s![.., ch, .., ..])
                .mapv_inplace(|v| g * (v - mean) * istd + b);
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let cache = self.cache.as_ref().expect("forward_train before backward");
        let (n, c, h, w) = grad_out.dim();
        let m = (n * h * w) as f64;
        let mut gx = Array4::zeros(grad_out.raw_dim());
        for ch in 0..c {
            let gy = grad_out.slice(ndarray::s![.., ch, .., ..]);
            let xhat = cache.xhat.slice(ndarray::s![.., ch, .., ..]);
            let sum_gy = gy.sum();
            let sum_gy_xhat = ndarray::Zip::from(&gy).and(&xhat).fold(0.0, |acc, &g, &xh| acc + g * xh);
            self.grad_gamma[ch] += sum_gy_xhat;
            self.grad_beta[ch] += sum_gy;
            let scale = self.gamma[ch] * cache.inv_std[ch] / m;
            let mut gx_lane = gx.slice_mut(ndarray::s![.., ch, .., ..]);
            ndarray::Zip::from(&mut gx_lane)
                .and(&gy)
                .and(&xhat)
                .for_each(|g, &dy, &xh| {
                    *g = scale * (m * dy - sum_gy - xh * sum_gy_xhat);
                });
        }
        gx
    }

    pub fn zero_grad(&mut self) {
        self.grad_gamma.fill(0.0);
        self.grad_beta.fill(0.0);
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor) {
        f(
            &format!("{prefix}.gamma"),
            ParamMut {
                value: self.gamma.view_mut().into_dyn(),
                grad: self.grad_gamma.view_mut().into_dyn(),
            },
        );
        f(
            &format!("{prefix}.beta"),
            ParamMut {
                value: self.beta.view_mut().into_dyn(),
                grad: self.grad_beta.view_mut().into_dyn(),
            },
        );
    }

    pub fn visit_buffers(&mut self, prefix: &str, f: &mut BufferVisitor) {
        f(
            &format!("{prefix}.running_mean"),
            BufferMut {
                value: self.running_mean.view_mut().into_dyn(),
            },
        );
        f(
            &format!("{prefix}.running_var"),
            BufferMut {
                value: self.running_var.view_mut().into_dyn(),
            },
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use rand::Rng;

    #[test]
    fn train_output_standardized() {
        let mut rng = derive_rng(0, &[10]);
        let mut bn = BatchNorm2d::new(2);
        let x = Array4::from_shape_fn((4, 2, 3, 3), |_| rng.random::<f64>() * 3.0 + 1.0);
        let y = bn.forward_train(&x);
        for ch in 0..2 {
            let lane = y.slice(ndarray::s![.., ch, .., ..]);
            let m = lane.sum() / lane.len() as f64;
            let v = lane.iter().map(|&a| (a - m) * (a - m)).sum::<f64>() / lane.len() as f64;
            assert!(m.abs() < 1e-10);
            assert!((v - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn eval_uses_running_stats_and_is_deterministic() {
        let mut rng = derive_rng(0, &[11]);
        let mut bn = BatchNorm2d::new(1);
        let x = Array4::from_shape_fn((8, 1, 2, 2), |_| rng.random::<f64>());
        for _ in 0..20 {
            bn.forward_train(&x);
        }
        let probe = Array4::from_shape_fn((3, 1, 2, 2), |_| rng.random::<f64>());
        let a = bn.forward_eval(&probe);
        let b = bn.forward_eval(&probe);
        assert_eq!(a, b);
        // per-sample independence: a batch of one matches the same row
        let single = probe.slice(ndarray::s![0..1, .., .., ..]).to_owned();
        let c = bn.forward_eval(&single);
        assert_eq!(c.index_axis(ndarray::Axis(0), 0), a.index_axis(ndarray::Axis(0), 0));
    }

    #[test]
    fn backward_matches_finite_difference() {
        let mut rng = derive_rng(0, &[12]);
        let x = Array4::from_shape_fn((3, 2, 2, 2), |_| rng.random::<f64>() * 2.0 - 1.0);
        let w = Array4::from_shape_fn(x.raw_dim(), |_| rng.random::<f64>() - 0.5);
        let loss = |bn: &mut BatchNorm2d, x: &Array4<f64>| (bn.forward_train(x) * &w).sum();

        let mut bn = BatchNorm2d::new(2);
        bn.gamma[0] = 1.3;
        bn.gamma[1] = 0.7;
        bn.beta[0] = 0.2;
        let _ = bn.forward_train(&x);
        bn.zero_grad();
        let gx = bn.backward(&w);

        let eps = 1e-6;
        let mut x_probe = x.clone();
        for &idx in &[[0usize, 0, 0, 0], [2, 1, 1, 1], [1, 0, 1, 0]] {
            x_probe[idx] = x[idx] + eps;
            let up = loss(&mut bn, &x_probe);
            x_probe[idx] = x[idx] - eps;
            let down = loss(&mut bn, &x_probe);
            x_probe[idx] = x[idx];
            let num = (up - down) / (2.0 * eps);
            assert!(
                (gx[idx] - num).abs() / num.abs().max(1.0) < 1e-6,
                "bn input grad {idx:?}: {} vs {num}",
                gx[idx]
            );
        }
        // gamma gradient
        let orig = bn.gamma[1];
        bn.gamma[1] = orig + eps;
        let up = loss(&mut bn, &x);
        bn.gamma[1] = orig - eps;
        let down = loss(&mut bn, &x);
        bn.gamma[1] = orig;
        let num = (up - down) / (2.0 * eps);
        assert!((bn.grad_gamma[1] - num).abs() / num.abs().max(1.0) < 1e-6);
    }
}
