//! Resolution-invariance probe.
//!
//! Measures how much resolution information survives in the embedding: a
//! fresh logistic-regression classifier is fit to separate HR from LR
//! embeddings of paired images. Accuracy near the 50% chance level means
//! the embedding carries little resolution signal.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{derive_rng, stream};

#[derive(Debug, Clone, serde::Serialize)]
pub struct InvarianceProbe {
    /// Mean Euclidean distance between paired HR/LR embeddings.
    pub mean_pair_distance: f64,
    /// Held-out accuracy of the HR-vs-LR linear probe, in percent.
    pub probe_accuracy: f64,
}

/// Fit a logistic probe on half the pairs, report accuracy on the rest.
///
/// Rows of `hr` and `lr` are embeddings of the same source image. Pairs
/// are split between train and held-out so twins never straddle the
/// split.
pub fn invariance_probe_on_embeddings(
    hr: &Array2<f64>,
    lr: &Array2<f64>,
    seed: u64,
) -> Result<InvarianceProbe> {
    if hr.nrows() != lr.nrows() || hr.ncols() != lr.ncols() {
        return Err(Error::invalid(format!(
            "unpaired probe input: hr {}x{} vs lr {}x{}",
            hr.nrows(),
            hr.ncols(),
            lr.nrows(),
            lr.ncols()
        )));
    }
    let n = hr.nrows();
    if n < 4 {
        return Err(Error::invalid(format!(
            "invariance probe needs at least 4 pairs, got {n}"
        )));
    }

    let mean_pair_distance = (0..n)
        .map(|i| {
            let d: f64 = hr
                .row(i)
                .iter()
                .zip(lr.row(i).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d.sqrt()
        })
        .sum::<f64>()
        / n as f64;

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = derive_rng(seed, &[stream::PROBE]);
    order.shuffle(&mut rng);
    let split = n / 2;
    let (train_pairs, test_pairs) = order.split_at(split);

    let stack = |pairs: &[usize]| -> (Array2<f64>, Array1<f64>) {
        let mut x = Array2::zeros((pairs.len() * 2, hr.ncols()));
        let mut y = Array1::zeros(pairs.len() * 2);
        for (row, &p) in pairs.iter().enumerate() {
            x.row_mut(row).assign(&hr.row(p));
            y[row] = 1.0;
            x.row_mut(pairs.len() + row).assign(&lr.row(p));
            y[pairs.len() + row] = 0.0;
        }
        (x, y)
    };
    let (x_train, y_train) = stack(train_pairs);
    let (x_test, y_test) = stack(test_pairs);

    let (w, b) = fit_logistic(&x_train, &y_train, 500, 0.5, 1e-4);
    let probe_accuracy = accuracy(&x_test, &y_test, &w, b);

    Ok(InvarianceProbe {
        mean_pair_distance,
        probe_accuracy,
    })
}

/// Accuracy of a logistic probe fit on `(x_train, y_train)` and scored on
/// `(x_test, y_test)`; labels are 0/1, result in percent.
pub fn linear_probe_accuracy(
    x_train: &Array2<f64>,
    y_train: &Array1<f64>,
    x_test: &Array2<f64>,
    y_test: &Array1<f64>,
) -> f64 {
    let (w, b) = fit_logistic(x_train, y_train, 500, 0.5, 1e-4);
    accuracy(x_test, y_test, &w, b)
}

fn fit_logistic(
    x: &Array2<f64>,
    y: &Array1<f64>,
    iters: usize,
    lr: f64,
    l2: f64,
) -> (Array1<f64>, f64) {
    let n = x.nrows() as f64;
    let mut w = Array1::zeros(x.ncols());
    let mut b = 0.0;
    for _ in 0..iters {
        let logits = x.dot(&w) + b;
        let probs = logits.mapv(|z: f64| 1.0 / (1.0 + (-z).exp()));
        let err = &probs - y;
        let grad_w = x.t().dot(&err) / n + &w * l2;
        let grad_b = err.sum() / n;
        w = &w - &(grad_w * lr);
        b -= lr * grad_b;
    }
    (w, b)
}

fn accuracy(x: &Array2<f64>, y: &Array1<f64>, w: &Array1<f64>, b: f64) -> f64 {
    let logits = x.dot(w) + b;
    let correct = logits
        .iter()
        .zip(y.iter())
        .filter(|(&z, &t)| (z > 0.0) == (t > 0.5))
        .count();
    100.0 * correct as f64 / y.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;
    use rand::Rng;

    #[test]
    fn identical_pairs_zero_distance_chance_probe() {
        let mut rng = derive_rng(3, &[99]);
        let x = Array::from_shape_fn((16, 8), |_| rng.random::<f64>());
        let probe = invariance_probe_on_embeddings(&x, &x.clone(), 5).unwrap();
        assert_eq!(probe.mean_pair_distance, 0.0);
        // identical twins are inseparable; zero-logit probe predicts one
        // class for everything, i.e. exactly chance
        assert!((probe.probe_accuracy - 50.0).abs() < 1e-9);
    }

    #[test]
    fn separable_pairs_probe_near_perfect() {
        let mut rng = derive_rng(4, &[98]);
        let hr = Array::from_shape_fn((24, 6), |_| rng.random::<f64>() + 3.0);
        let lr = Array::from_shape_fn((24, 6), |_| rng.random::<f64>() - 3.0);
        let probe = invariance_probe_on_embeddings(&hr, &lr, 5).unwrap();
        assert!(probe.probe_accuracy > 95.0, "got {}", probe.probe_accuracy);
        assert!(probe.mean_pair_distance > 1.0);
    }

    #[test]
    fn unpaired_input_rejected() {
        let hr = Array2::<f64>::zeros((4, 3));
        let lr = Array2::<f64>::zeros((5, 3));
        assert!(invariance_probe_on_embeddings(&hr, &lr, 0).is_err());
    }
}
