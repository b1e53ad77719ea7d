//! Stateless spatial ops: global average pooling and nearest 2x upsampling.

use ndarray::{Array2, Array4};

/// Spatial mean per channel: `(N, C, H, W) -> (N, C)`.
pub fn global_avg_pool(x: &Array4<f64>) -> Array2<f64> {
    let (n, c, h, w) = x.dim();
    let m = (h * w) as f64;
    let mut out = Array2::zeros((n, c));
    for ni in 0..n {
        for ch in 0..c {
            out[[ni, ch]] = x.slice(ndarray::s![ni, ch, .., ..]).sum() / m;
        }
    }
    out
}

/// Broadcast the pooled gradient back over the spatial grid.
pub fn global_avg_pool_backward(grad: &Array2<f64>, h: usize, w: usize) -> Array4<f64> {
    let (n, c) = grad.dim();
    let m = (h * w) as f64;
    let mut gx = Array4::zeros((n, c, h, w));
    for ni in 0..n {
        for ch in 0..c {
            gx.slice_mut(ndarray::s![ni, ch, .., ..])
                .fill(grad[[ni, ch]] / m);
        }
    }
    gx
}

/// Nearest-neighbor 2x upsampling.
pub fn upsample2x(x: &Array4<f64>) -> Array4<f64> {
    let (n, c, h, w) = x.dim();
    let mut out = Array4::zeros((n, c, h * 2, w * 2));
    for ni in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let v = x[[ni, ch, y, xx]];
                    out[[ni, ch, 2 * y, 2 * xx]] = v;
                    out[[ni, ch, 2 * y, 2 * xx + 1]] = v;
                    out[[ni, ch, 2 * y + 1, 2 * xx]] = v;
                    out[[ni, ch, 2 * y + 1, 2 * xx + 1]] = v;
                }
            }
        }
    }
    out
}

/// Each source cell collects the gradient of its four copies.
pub fn upsample2x_backward(grad_out: &Array4<f64>) -> Array4<f64> {
    let (n, c, h2, w2) = grad_out.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut gx = Array4::zeros((n, c, h, w));
    for ni in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    gx[[ni, ch, y, xx]] = grad_out[[ni, ch, 2 * y, 2 * xx]]
                        + grad_out[[ni, ch, 2 * y, 2 * xx + 1]]
                        + grad_out[[ni, ch, 2 * y + 1, 2 * xx]]
                        + grad_out[[ni, ch, 2 * y + 1, 2 * xx + 1]];
                }
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pool_constant_and_hand_case() {
        let x = Array4::from_elem((2, 3, 4, 4), 3.0);
        let v = global_avg_pool(&x);
        assert!(v.iter().all(|&a| (a - 3.0).abs() < 1e-12));

        // 2x2 single-channel map [[1,2],[3,4]] -> 2.5
        let x = Array4::from_shape_vec((1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((global_avg_pool(&x)[[0, 0]] - 2.5).abs() < 1e-12);

        // linearity in the input
        let scaled = global_avg_pool(&(&x * 2.5));
        assert!((scaled[[0, 0]] - 6.25).abs() < 1e-12);
    }

    #[test]
    fn pool_backward_spreads_evenly() {
        let g = array![[4.0]];
        let gx = global_avg_pool_backward(&g, 2, 2);
        assert!(gx.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn upsample_round_trip_shapes() {
        let x = Array4::from_shape_vec((1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = upsample2x(&x);
        assert_eq!(y.dim(), (1, 1, 4, 4));
        assert_eq!(y[[0, 0, 0, 1]], 1.0);
        assert_eq!(y[[0, 0, 3, 3]], 4.0);
        let g = upsample2x_backward(&Array4::from_elem((1, 1, 4, 4), 1.0));
        assert!(g.iter().all(|&v| (v - 4.0).abs() < 1e-12));
    }
}
