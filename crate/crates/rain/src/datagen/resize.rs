//! Down-sampling / up-sampling used to synthesize LR images.
//!
//! Reduction uses area averaging (box filter with fractional overlap),
//! enlargement uses bilinear interpolation with edge clamping. Both are
//! separable, so the 2-D resample is two 1-D passes.

use ndarray::Array3;

use crate::error::{Error, Result};

/// Intermediate size after down-sampling by `rate`: `ceil(dim / rate)`.
pub fn downsampled_size(h: usize, w: usize, rate: u32) -> (usize, usize) {
    let r = rate as usize;
    (h.div_ceil(r), w.div_ceil(r))
}

/// Down-sample by `rate` then bilinearly resize back to the input shape.
///
/// `rate == 1` returns the image unchanged. The output always has the
/// input's H x W x 3 shape.
pub fn downsample_upsample(image: &Array3<f64>, rate: u32) -> Result<Array3<f64>> {
    if rate < 1 {
        return Err(Error::invalid(format!("down-sampling rate {rate} < 1")));
    }
    let (h, w, c) = {
        let s = image.shape();
        (s[0], s[1], s[2])
    };
    if c != 3 {
        return Err(Error::invalid(format!("expected 3 channels, got {c}")));
    }
    if image.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("image contains non-finite pixels"));
    }
    if rate == 1 {
        return Ok(image.clone());
    }
    if h < rate as usize || w < rate as usize {
        return Err(Error::invalid(format!(
            "image {h}x{w} smaller than rate {rate}"
        )));
    }
    let (h2, w2) = downsampled_size(h, w, rate);
    let small = area_resample(image, h2, w2);
    Ok(bilinear_resample(&small, h, w))
}

/// Area (box) resample to `(out_h, out_w)`; exact for integer ratios.
fn area_resample(src: &Array3<f64>, out_h: usize, out_w: usize) -> Array3<f64> {
    let rows = area_pass(src, out_h, 0);
    area_pass(&rows, out_w, 1)
}

fn area_pass(src: &Array3<f64>, out_len: usize, axis: usize) -> Array3<f64> {
    let s = src.shape();
    let in_len = s[axis];
    let mut out_shape = [s[0], s[1], s[2]];
    out_shape[axis] = out_len;
    let scale = in_len as f64 / out_len as f64;
    let mut out = Array3::zeros(out_shape);
    for i in 0..out_len {
        let start = i as f64 * scale;
        let end = (i + 1) as f64 * scale;
        let j_lo = start.floor() as usize;
        let j_hi = (end.ceil() as usize).min(in_len);
        for j in j_lo..j_hi {
            let overlap = (end.min((j + 1) as f64) - start.max(j as f64)).max(0.0);
            if overlap == 0.0 {
                continue;
            }
            let w = overlap / scale;
            match axis {
                0 => {
                    for x in 0..s[1] {
                        for ch in 0..s[2] {
                            out[[i, x, ch]] += w * src[[j, x, ch]];
                        }
                    }
                }
                _ => {
                    for y in 0..s[0] {
                        for ch in 0..s[2] {
                            out[[y, i, ch]] += w * src[[y, j, ch]];
                        }
                    }
                }
            }
        }
    }
    out
}

fn bilinear_resample(src: &Array3<f64>, out_h: usize, out_w: usize) -> Array3<f64> {
    let tmp = bilinear_pass(src, out_h, 0);
    bilinear_pass(&tmp, out_w, 1)
}

fn bilinear_pass(src: &Array3<f64>, out_len: usize, axis: usize) -> Array3<f64> {
    let s = src.shape();
    let in_len = s[axis];
    let mut out_shape = [s[0], s[1], s[2]];
    out_shape[axis] = out_len;
    let scale = in_len as f64 / out_len as f64;
    let mut out = Array3::zeros(out_shape);
    for i in 0..out_len {
        // half-pixel-center convention, edges clamped
        let pos = (i as f64 + 0.5) * scale - 0.5;
        let j0 = pos.floor();
        let t = pos - j0;
        let lo = (j0.max(0.0) as usize).min(in_len - 1);
        let hi = ((j0 + 1.0).max(0.0) as usize).min(in_len - 1);
        match axis {
            0 => {
                for x in 0..s[1] {
                    for ch in 0..s[2] {
                        out[[i, x, ch]] = (1.0 - t) * src[[lo, x, ch]] + t * src[[hi, x, ch]];
                    }
                }
            }
            _ => {
                for y in 0..s[0] {
                    for ch in 0..s[2] {
                        out[[y, i, ch]] = (1.0 - t) * src[[y, lo, ch]] + t * src[[y, hi, ch]];
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::Rng;

    use crate::rng::derive_rng;

    #[test]
    fn rate_one_is_identity() {
        let mut rng = derive_rng(1, &[0]);
        let img = Array3::from_shape_fn((17, 13, 3), |_| rng.random::<f64>());
        let out = downsample_upsample(&img, 1).unwrap();
        assert_eq!(img, out);
    }

    #[test]
    fn shape_preserved_and_intermediate_size() {
        let img = Array3::zeros((256, 128, 3));
        let out = downsample_upsample(&img, 2).unwrap();
        assert_eq!(out.shape(), &[256, 128, 3]);
        assert_eq!(downsampled_size(256, 128, 2), (128, 64));
        // non-divisible sizes round up so no row/column is dropped
        assert_eq!(downsampled_size(33, 13, 4), (9, 4));
    }

    #[test]
    fn constant_image_preserved() {
        let img = Array3::from_elem((32, 20, 3), 0.37);
        let out = downsample_upsample(&img, 4).unwrap();
        for v in out.iter() {
            assert!((v - 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        let img = Array3::zeros((8, 8, 3));
        assert!(downsample_upsample(&img, 0).is_err());
        assert!(downsample_upsample(&img, 9).is_err());
        let mut bad = img.clone();
        bad[[0, 0, 0]] = f64::NAN;
        assert!(downsample_upsample(&bad, 2).is_err());
    }

    #[test]
    fn area_downsample_exact_for_integer_ratio() {
        // 2x2 blocks average exactly
        let img = Array3::from_shape_fn((4, 4, 3), |(y, x, _)| (y * 4 + x) as f64);
        let small = area_resample(&img, 2, 2);
        assert!((small[[0, 0, 0]] - (0.0 + 1.0 + 4.0 + 5.0) / 4.0).abs() < 1e-12);
        assert!((small[[1, 1, 0]] - (10.0 + 11.0 + 14.0 + 15.0) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn mean_preserved_by_area_pass() {
        let mut rng = derive_rng(2, &[1]);
        let img = Array3::from_shape_fn((15, 11, 3), |_| rng.random::<f64>());
        let small = area_resample(&img, 5, 11);
        // uniform partition: global mean is exactly preserved
        let m1 = img.mean().unwrap();
        let m2 = small.mean().unwrap();
        assert!((m1 - m2).abs() < 1e-10);
    }
}
