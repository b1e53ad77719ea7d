//! Fully connected layer on `(N, D)` batches.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

use super::init::fill_fan_in_uniform;
use super::param::{ParamMut, ParamVisitor};

pub struct Linear {
    /// Weight layout `(out, in)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub grad_weight: Array2<f64>,
    pub grad_bias: Array1<f64>,
    cache: Option<Array2<f64>>,
}

impl Linear {
    pub fn new(d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut weight = Array2::zeros((d_out, d_in));
        fill_fan_in_uniform(weight.as_slice_mut().unwrap(), d_in, rng);
        Linear {
            grad_weight: Array2::zeros(weight.raw_dim()),
            weight,
            bias: Array1::zeros(d_out),
            grad_bias: Array1::zeros(d_out),
            cache: None,
        }
    }

    /// All-zero weights and bias: the classifier head starts uniform.
    pub fn new_zeroed(d_in: usize, d_out: usize) -> Self {
        Linear {
            weight: Array2::zeros((d_out, d_in)),
            bias: Array1::zeros(d_out),
            grad_weight: Array2::zeros((d_out, d_in)),
            grad_bias: Array1::zeros(d_out),
            cache: None,
        }
    }

    fn run(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    pub fn forward_train(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let y = self.run(x);
        self.cache = Some(x.clone());
        y
    }

    pub fn forward_eval(&self, x: &Array2<f64>) -> Array2<f64> {
        self.run(x)
    }

    pub fn backward(&mut self, grad_out: &Array2<f64>, accumulate: bool) -> Array2<f64> {
        let x = self.cache.as_ref().expect("forward_train before backward");
        if accumulate {
            self.grad_weight += &grad_out.t().dot(x);
            for (gb, col) in self.grad_bias.iter_mut().zip(grad_out.t().outer_iter()) {
                *gb += col.sum();
            }
        }
        grad_out.dot(&self.weight)
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
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn forward_known_values() {
        let mut rng = derive_rng(0, &[20]);
        let mut lin = Linear::new(2, 2, &mut rng);
        lin.weight = array![[1.0, 2.0], [3.0, 4.0]];
        lin.bias = array![0.5, -0.5];
        let y = lin.forward_eval(&array![[1.0, 1.0]]);
        assert_eq!(y, array![[3.5, 6.5]]);
    }

    #[test]
    fn backward_matches_finite_difference() {
        let mut rng = derive_rng(0, &[21]);
        let mut lin = Linear::new(3, 2, &mut rng);
        let x = Array2::from_shape_fn((4, 3), |_| rng.random::<f64>() - 0.5);
        let w = Array2::from_shape_fn((4, 2), |_| rng.random::<f64>() - 0.5);
        let loss = |lin: &Linear, x: &Array2<f64>| (lin.forward_eval(x) * &w).sum();

        let _ = lin.forward_train(&x);
        lin.zero_grad();
        let gx = lin.backward(&w, true);

        let eps = 1e-6;
        let mut xp = x.clone();
        xp[[1, 2]] += eps;
        let up = loss(&lin, &xp);
        xp[[1, 2]] -= 2.0 * eps;
        let down = loss(&lin, &xp);
        let num = (up - down) / (2.0 * eps);
        assert!((gx[[1, 2]] - num).abs() < 1e-8);

        let orig = lin.weight[[0, 1]];
        lin.weight[[0, 1]] = orig + eps;
        let up = loss(&lin, &x);
        lin.weight[[0, 1]] = orig - eps;
        let down = loss(&lin, &x);
        lin.weight[[0, 1]] = orig;
        let num = (up - down) / (2.0 * eps);
        assert!((lin.grad_weight[[0, 1]] - num).abs() < 1e-8);
    }
}
