//! ReLU family activation with cached output for the backward pass.

use ndarray::Array4;

/// `slope == 0.0` gives plain ReLU; discriminators use 0.2.
pub struct Activation {
    pub slope: f64,
    cache: Option<Array4<f64>>,
}

impl Activation {
    pub fn relu() -> Self {
        Activation {
            slope: 0.0,
            cache: None,
        }
    }

    pub fn leaky(slope: f64) -> Self {
        Activation { slope, cache: None }
    }

    fn apply(&self, x: &Array4<f64>) -> Array4<f64> {
        let s = self.slope;
        x.mapv(|v| if v > 0.0 { v } else { s * v })
    }

    pub fn forward_train(&mut self, x: &Array4<f64>) -> Array4<f64> {
        let y = self.apply(x);
        self.cache = Some(y.clone());
        y
    }

    pub fn forward_eval(&self, x: &Array4<f64>) -> Array4<f64> {
        self.apply(x)
    }

    pub fn backward(&mut self, grad_out: &Array4<f64>) -> Array4<f64> {
        let y = self.cache.as_ref().expect("forward_train before backward");
        let s = self.slope;
        let mut gx = grad_out.clone();
        ndarray::Zip::from(&mut gx).and(y).for_each(|g, &v| {
            if v <= 0.0 {
                *g *= s;
            }
        });
        gx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    #[test]
    fn relu_and_leaky_values() {
        let x = Array4::from_shape_vec((1, 1, 1, 4), vec![-2.0, -0.5, 0.0, 3.0]).unwrap();
        let relu = Activation::relu();
        assert_eq!(
            relu.forward_eval(&x).as_slice().unwrap(),
            &[0.0, 0.0, 0.0, 3.0]
        );
        let leaky = Activation::leaky(0.2);
        let y = leaky.forward_eval(&x);
        assert!((y[[0, 0, 0, 0]] + 0.4).abs() < 1e-12);
        assert_eq!(y[[0, 0, 0, 3]], 3.0);
    }

    #[test]
    fn backward_masks_negative_side() {
        let x = Array4::from_shape_vec((1, 1, 1, 3), vec![-1.0, 2.0, -3.0]).unwrap();
        let mut act = Activation::leaky(0.1);
        let _ = act.forward_train(&x);
        let g = act.backward(&Array4::from_elem((1, 1, 1, 3), 1.0));
        assert_eq!(g.as_slice().unwrap(), &[0.1, 1.0, 0.1]);
    }
}
