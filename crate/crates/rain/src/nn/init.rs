//! Weight initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Fill with `U(-b, b)` where `b = sqrt(1 / fan_in)`. Biases and the
/// classifier head are zero-initialized at the call sites instead.
pub fn fill_fan_in_uniform(values: &mut [f64], fan_in: usize, rng: &mut ChaCha8Rng) {
    let bound = (1.0 / fan_in as f64).sqrt();
    for v in values {
        *v = rng.random_range(-bound..bound);
    }
}
