//! The four training losses and their min-max combination.
//!
//! The adversarial term scores per-level discriminators against the
//! extractor, the reconstruction term is an L1 penalty between decoded
//! features and the HR ground truth, and the classification and triplet
//! terms supervise the pooled embedding with identity labels. The total
//! is their unweighted sum; the discriminators ascend on the adversarial
//! term while extractor, decoder, and classifier descend on the total.
//!
//! Contract functions here take probabilities or distances and validate
//! their domains. Training never takes `log` of a stored probability:
//! the `*_head` functions work in logit space via stable log-sigmoid /
//! log-softmax and return analytic input gradients.

use ndarray::{Array1, Array2, Array4, ArrayView1, ArrayView2, ArrayView4};
use serde::Serialize;
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Probability floor applied before `log` in the contract functions.
pub const PROB_FLOOR: f64 = 1e-12;

/// Default triplet margin; the reference configuration exposes it.
pub const DEFAULT_MARGIN: f64 = 0.3;

// ---------------------------------------------------------------------
// numeric helpers
// ---------------------------------------------------------------------

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// ln sigma(z) = -softplus(-z)
fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

/// ln(1 - sigma(z)) = -softplus(z)
fn log_one_minus_sigmoid(z: f64) -> f64 {
    -softplus(z)
}

fn log_softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    logits.mapv(|z| z - log_z)
}

/// Numerically stable softmax of one logit row.
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    log_softmax(logits).mapv(f64::exp)
}

// ---------------------------------------------------------------------
// adversarial loss
// ---------------------------------------------------------------------

/// Adversarial objective from discriminator probabilities:
/// `mean(log d_hr) + mean(log(1 - d_lr))`.
///
/// The discriminator maximizes this; the extractor minimizes it through
/// the features the discriminator reads. Inputs must be strictly inside
/// `(0, 1)`; training code should keep logits and use [`adv_heads`]
/// instead of clamping probabilities.
pub fn adversarial_loss(d_hr: &[f64], d_lr: &[f64]) -> Result<f64> {
    if d_hr.is_empty() || d_lr.is_empty() {
        return Err(Error::invalid("adversarial_loss: empty input"));
    }
    for &d in d_hr.iter().chain(d_lr.iter()) {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::invalid(format!(
                "adversarial_loss: probability {d} outside (0, 1)"
            )));
        }
    }
    let hr = d_hr.iter().map(|&d| d.ln()).sum::<f64>() / d_hr.len() as f64;
    let lr = d_lr.iter().map(|&d| (1.0 - d).ln()).sum::<f64>() / d_lr.len() as f64;
    Ok(hr + lr)
}

/// How the extractor's adversarial update is driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdvMode {
    /// Flipped-label cross-entropy: the extractor maximizes
    /// `log D(f_lr)` and `log(1 - D(f_hr))`. Gradients do not vanish
    /// when the discriminator is confident.
    #[default]
    NonSaturating,
    /// The extractor descends on the raw objective itself.
    Minimax,
}

/// Value and logit gradients of the adversarial objective for one level.
pub struct AdvHeads {
    /// The measurable objective `mean log sigma(z_hr) + mean log(1 - sigma(z_lr))`.
    pub value: f64,
    /// Loss the discriminator minimizes (`-value`) and its logit grads.
    pub disc_loss: f64,
    pub disc_grad_hr: Array1<f64>,
    pub disc_grad_lr: Array1<f64>,
    /// Loss the extractor minimizes for this level and its logit grads.
    pub gen_loss: f64,
    pub gen_grad_hr: Array1<f64>,
    pub gen_grad_lr: Array1<f64>,
}

/// Evaluate the adversarial objective from raw logits for both update
/// directions at once.
pub fn adv_heads(z_hr: ArrayView1<f64>, z_lr: ArrayView1<f64>, mode: AdvMode) -> AdvHeads {
    let nh = z_hr.len() as f64;
    let nl = z_lr.len() as f64;
    let value = z_hr.iter().map(|&z| log_sigmoid(z)).sum::<f64>() / nh
        + z_lr.iter().map(|&z| log_one_minus_sigmoid(z)).sum::<f64>() / nl;

    // discriminator minimizes -value
    let disc_grad_hr = z_hr.mapv(|z| -(1.0 - sigmoid(z)) / nh);
    let disc_grad_lr = z_lr.mapv(|z| sigmoid(z) / nl);

    let (gen_loss, gen_grad_hr, gen_grad_lr) = match mode {
        AdvMode::NonSaturating => {
            let loss = -(z_lr.iter().map(|&z| log_sigmoid(z)).sum::<f64>() / nl)
                - (z_hr.iter().map(|&z| log_one_minus_sigmoid(z)).sum::<f64>() / nh);
            (
                loss,
                z_hr.mapv(|z| sigmoid(z) / nh),
                z_lr.mapv(|z| -(1.0 - sigmoid(z)) / nl),
            )
        }
        AdvMode::Minimax => (
            value,
            z_hr.mapv(|z| (1.0 - sigmoid(z)) / nh),
            z_lr.mapv(|z| -sigmoid(z) / nl),
        ),
    };

    AdvHeads {
        value,
        disc_loss: -value,
        disc_grad_hr,
        disc_grad_lr,
        gen_loss,
        gen_grad_hr,
        gen_grad_lr,
    }
}

// ---------------------------------------------------------------------
// reconstruction loss
// ---------------------------------------------------------------------

/// Mean absolute difference between two equally shaped batches.
pub fn l1_mean(a: ArrayView4<f64>, b: ArrayView4<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "l1_mean: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let n = a.len() as f64;
    Ok(a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / n)
}

/// HR reconstruction loss: both decoded branches are compared against the
/// HR ground truth (the LR branch's target is the HR image its input was
/// down-sampled from).
pub fn reconstruction_loss(
    recon_hr: ArrayView4<f64>,
    target_hr: ArrayView4<f64>,
    recon_lr: ArrayView4<f64>,
    target_hr_of_lr: ArrayView4<f64>,
) -> Result<f64> {
    Ok(l1_mean(recon_hr, target_hr)? + l1_mean(recon_lr, target_hr_of_lr)?)
}

/// Mean-L1 value plus gradient with respect to the reconstruction.
pub fn rec_head(recon: ArrayView4<f64>, target: ArrayView4<f64>) -> Result<(f64, Array4<f64>)> {
    if recon.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "rec_head: {:?} vs {:?}",
            recon.shape(),
            target.shape()
        )));
    }
    let n = recon.len() as f64;
    let mut grad = recon.to_owned();
    let mut loss = 0.0;
    for (g, t) in grad.iter_mut().zip(target.iter()) {
        let d = *g - t;
        loss += d.abs();
        *g = d.signum() / n;
    }
    Ok((loss / n, grad))
}

// ---------------------------------------------------------------------
// classification loss
// ---------------------------------------------------------------------

/// Mean negative log-likelihood of the true class from probability rows.
///
/// Each prediction row must be a probability vector (non-negative,
/// summing to one within 1e-6) and each label row one-hot. The true-class
/// probability is floored at `PROB_FLOOR` before the log.
pub fn classification_loss(pred_probs: ArrayView2<f64>, labels: ArrayView2<f64>) -> Result<f64> {
    if pred_probs.shape() != labels.shape() {
        return Err(Error::ShapeMismatch(format!(
            "classification_loss: {:?} vs {:?}",
            pred_probs.shape(),
            labels.shape()
        )));
    }
    if pred_probs.nrows() == 0 {
        return Err(Error::invalid("classification_loss: empty batch"));
    }
    let mut total = 0.0;
    for (pred, label) in pred_probs.outer_iter().zip(labels.outer_iter()) {
        let sum: f64 = pred.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || pred.iter().any(|&p| p < 0.0) {
            return Err(Error::invalid(format!(
                "classification_loss: prediction row is not a probability vector (sum {sum})"
            )));
        }
        let ones = label.iter().filter(|&&v| v == 1.0).count();
        if ones != 1 || label.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid(
                "classification_loss: label row is not one-hot",
            ));
        }
        let k = label.iter().position(|&v| v == 1.0).unwrap();
        total -= pred[k].max(PROB_FLOOR).ln();
    }
    Ok(total / pred_probs.nrows() as f64)
}

/// Cross-entropy from logits over a row subset, with logit gradients.
///
/// Rows outside `rows` contribute nothing and get zero gradient, which is
/// how unlabeled records are masked in semi-supervised runs. Returns
/// `(0, zeros)` when `rows` is empty.
pub fn cls_head(
    logits: &Array2<f64>,
    labels: &[usize],
    rows: &[usize],
) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "cls_head: {} logit rows vs {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    let k = logits.ncols();
    let mut grad = Array2::zeros(logits.raw_dim());
    if rows.is_empty() {
        return Ok((0.0, grad));
    }
    let n = rows.len() as f64;
    let mut loss = 0.0;
    for &r in rows {
        let label = labels[r];
        if label >= k {
            return Err(Error::invalid(format!(
                "cls_head: label {label} out of range for {k} classes"
            )));
        }
        let lsm = log_softmax(logits.row(r));
        loss -= lsm[label];
        for c in 0..k {
            grad[[r, c]] = (lsm[c].exp() - if c == label { 1.0 } else { 0.0 }) / n;
        }
    }
    Ok((loss / n, grad))
}

// ---------------------------------------------------------------------
// triplet loss
// ---------------------------------------------------------------------

/// Euclidean distances from an anchor to its positive and negative.
pub fn pair_distances(
    v_anchor: ArrayView1<f64>,
    v_pos: ArrayView1<f64>,
    v_neg: ArrayView1<f64>,
) -> Result<(f64, f64)> {
    if v_anchor.len() != v_pos.len() || v_anchor.len() != v_neg.len() {
        return Err(Error::ShapeMismatch(format!(
            "pair_distances: lengths {}, {}, {}",
            v_anchor.len(),
            v_pos.len(),
            v_neg.len()
        )));
    }
    let d = |a: ArrayView1<f64>, b: ArrayView1<f64>| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    Ok((d(v_anchor, v_pos), d(v_anchor, v_neg)))
}

/// Mean hinge `max(0, m + d_pos - d_neg)` over distance pairs.
pub fn triplet_loss(distance_pairs: &[(f64, f64)], margin: f64) -> Result<f64> {
    if margin <= 0.0 {
        return Err(Error::invalid(format!("triplet margin {margin} <= 0")));
    }
    if distance_pairs.is_empty() {
        return Err(Error::invalid("triplet_loss: no distance pairs"));
    }
    for &(dp, dn) in distance_pairs {
        if dp < 0.0 || dn < 0.0 {
            return Err(Error::invalid("triplet_loss: negative distance"));
        }
    }
    Ok(distance_pairs
        .iter()
        .map(|&(dp, dn)| (margin + dp - dn).max(0.0))
        .sum::<f64>()
        / distance_pairs.len() as f64)
}

/// Guard below which a pair of embeddings counts as coincident and the
/// distance direction is treated as zero.
const DIST_EPS: f64 = 1e-12;

/// Triplet hinge over embedding rows with gradients w.r.t. the rows.
///
/// `triples` index into rows of `v`; pass only triples whose members are
/// all labeled. Returns `(0, zeros)` for an empty triple list.
pub fn triplet_head(
    v: &Array2<f64>,
    triples: &[(usize, usize, usize)],
    margin: f64,
) -> Result<(f64, Array2<f64>)> {
    if margin <= 0.0 {
        return Err(Error::invalid(format!("triplet margin {margin} <= 0")));
    }
    let mut grad = Array2::zeros(v.raw_dim());
    if triples.is_empty() {
        return Ok((0.0, grad));
    }
    let t = triples.len() as f64;
    let mut loss = 0.0;
    for &(a, p, n) in triples {
        let (d_pos, d_neg) = pair_distances(v.row(a), v.row(p), v.row(n))?;
        let h = margin + d_pos - d_neg;
        if h <= 0.0 {
            continue;
        }
        loss += h;
        for c in 0..v.ncols() {
            let u_ap = if d_pos > DIST_EPS {
                (v[[a, c]] - v[[p, c]]) / d_pos
            } else {
                0.0
            };
            let u_an = if d_neg > DIST_EPS {
                (v[[a, c]] - v[[n, c]]) / d_neg
            } else {
                0.0
            };
            grad[[a, c]] += (u_ap - u_an) / t;
            grad[[p, c]] -= u_ap / t;
            grad[[n, c]] += u_an / t;
        }
    }
    Ok((loss / t, grad))
}

// ---------------------------------------------------------------------
// total loss
// ---------------------------------------------------------------------

/// Per-term multipliers; the reference configuration keeps all at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub adv: f64,
    pub rec: f64,
    pub cls: f64,
    pub tri: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            adv: 1.0,
            rec: 1.0,
            cls: 1.0,
            tri: 1.0,
        }
    }
}

/// The scalar loss terms of one training step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBundle {
    /// Adversarial objective per discriminator level.
    pub adv: BTreeMap<usize, f64>,
    pub adv_sum: f64,
    pub rec: f64,
    pub cls: f64,
    pub tri: f64,
    /// Weighted sum; equals `adv_sum + rec + cls + tri` at unit weights.
    pub total: f64,
    pub margin: f64,
}

/// The two directions of the alternating optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMaxViews {
    /// The discriminators ascend on this (the adversarial objective).
    pub discriminator_ascends: f64,
    /// Extractor, decoder, and classifier descend on this.
    pub generator_descends: f64,
}

/// Combine per-term values into the training total.
pub fn total_loss(
    adv: BTreeMap<usize, f64>,
    rec: f64,
    cls: f64,
    tri: f64,
    margin: f64,
    weights: LossWeights,
) -> LossBundle {
    let adv_sum: f64 = adv.values().sum();
    let total = weights.adv * adv_sum + weights.rec * rec + weights.cls * cls + weights.tri * tri;
    LossBundle {
        adv,
        adv_sum,
        rec,
        cls,
        tri,
        total,
        margin,
    }
}

/// The two optimization views of a bundle. `generator_adv` is the value
/// the extractor's update actually descends on, which differs from the
/// measurable objective under [`AdvMode::NonSaturating`].
pub fn minmax_views(bundle: &LossBundle, generator_adv: f64, weights: LossWeights) -> MinMaxViews {
    MinMaxViews {
        discriminator_ascends: bundle.adv_sum,
        generator_descends: weights.adv * generator_adv
            + weights.rec * bundle.rec
            + weights.cls * bundle.cls
            + weights.tri * bundle.tri,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array4};

    const TOL: f64 = 1e-9;

    #[test]
    fn adversarial_chance_level() {
        let l = adversarial_loss(&[0.5, 0.5], &[0.5]).unwrap();
        assert!((l - (2.0 * 0.5f64.ln())).abs() < TOL);
        assert!((l + 1.3862943611198906).abs() < TOL);
    }

    #[test]
    fn adversarial_direct_value() {
        let l = adversarial_loss(&[0.8], &[0.4]).unwrap();
        assert!((l - (0.8f64.ln() + 0.6f64.ln())).abs() < TOL);
        assert!((l + 0.7339691750802005).abs() < TOL);
    }

    #[test]
    fn adversarial_supremum_approached() {
        let near = adversarial_loss(&[1.0 - 1e-9], &[1e-9]).unwrap();
        assert!(near < 0.0 && near > -1e-8);
    }

    #[test]
    fn adversarial_rejects_out_of_range() {
        assert!(adversarial_loss(&[1.0], &[0.5]).is_err());
        assert!(adversarial_loss(&[0.5], &[0.0]).is_err());
        assert!(adversarial_loss(&[], &[0.5]).is_err());
    }

    #[test]
    fn adversarial_role_swap_symmetry() {
        let d = [0.81, 0.33, 0.6];
        let d2 = [0.12, 0.77];
        let flip = |xs: &[f64]| xs.iter().map(|&x| 1.0 - x).collect::<Vec<_>>();
        let s1 = adversarial_loss(&d, &d2).unwrap() + adversarial_loss(&flip(&d2), &flip(&d)).unwrap();
        let s2 = adversarial_loss(&flip(&d2), &flip(&d)).unwrap() + adversarial_loss(&d, &d2).unwrap();
        assert!((s1 - s2).abs() < TOL);
    }

    #[test]
    fn adv_heads_value_matches_probability_form() {
        let z_hr = array![0.3, -1.2];
        let z_lr = array![0.9];
        let heads = adv_heads(z_hr.view(), z_lr.view(), AdvMode::Minimax);
        let probs_hr: Vec<f64> = z_hr.iter().map(|&z| sigmoid(z)).collect();
        let probs_lr: Vec<f64> = z_lr.iter().map(|&z| sigmoid(z)).collect();
        let reference = adversarial_loss(&probs_hr, &probs_lr).unwrap();
        assert!((heads.value - reference).abs() < TOL);
        assert!((heads.disc_loss + reference).abs() < TOL);
        assert!((heads.gen_loss - reference).abs() < TOL);
    }

    #[test]
    fn reconstruction_zero_and_half_offset() {
        let t = Array4::from_elem((1, 3, 4, 4), 0.25);
        let r = t.clone();
        assert_eq!(
            reconstruction_loss(r.view(), t.view(), r.view(), t.view()).unwrap(),
            0.0
        );
        let shifted = t.mapv(|x| x + 0.5);
        let l = reconstruction_loss(shifted.view(), t.view(), shifted.view(), t.view()).unwrap();
        assert!((l - 1.0).abs() < TOL);
    }

    #[test]
    fn reconstruction_is_elementwise() {
        // permuting positions jointly leaves the value unchanged
        let r = Array4::from_shape_fn((1, 1, 2, 2), |(_, _, i, j)| (2 * i + j) as f64 * 0.1);
        let t = Array4::from_shape_fn((1, 1, 2, 2), |(_, _, i, j)| (2 * i + j) as f64 * 0.07);
        let perm = |a: &Array4<f64>| {
            Array4::from_shape_fn((1, 1, 2, 2), |(_, _, i, j)| a[[0, 0, 1 - i, 1 - j]])
        };
        let l1 = l1_mean(r.view(), t.view()).unwrap();
        let l2 = l1_mean(perm(&r).view(), perm(&t).view()).unwrap();
        assert!((l1 - l2).abs() < TOL);
    }

    #[test]
    fn classification_values() {
        // perfect prediction
        let pred = array![[1.0, 0.0, 0.0]];
        let label = array![[1.0, 0.0, 0.0]];
        assert!(classification_loss(pred.view(), label.view()).unwrap() < 1e-9);

        // uniform over 10 classes -> ln 10
        let pred = Array2::from_elem((2, 10), 0.1);
        let mut label = Array2::zeros((2, 10));
        label[[0, 3]] = 1.0;
        label[[1, 7]] = 1.0;
        let l = classification_loss(pred.view(), label.view()).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-9);
        assert!((l - 2.302585092994046).abs() < 1e-9);

        // probability 1/4 on the true class -> ln 4
        let pred = array![[0.25, 0.5, 0.25]];
        let label = array![[1.0, 0.0, 0.0]];
        let l = classification_loss(pred.view(), label.view()).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-9);
        assert!((l - 1.3862943611198906).abs() < 1e-9);
    }

    #[test]
    fn classification_rejects_unnormalized() {
        let pred = array![[0.5, 0.4]];
        let label = array![[1.0, 0.0]];
        assert!(classification_loss(pred.view(), label.view()).is_err());
    }

    #[test]
    fn pair_distance_values() {
        let (dp, dn) = pair_distances(
            array![0.0, 0.0].view(),
            array![0.0, 0.0].view(),
            array![3.0, 4.0].view(),
        )
        .unwrap();
        assert_eq!(dp, 0.0);
        assert!((dn - 5.0).abs() < TOL);
    }

    #[test]
    fn pair_distances_rotation_invariant() {
        // rotate all three vectors by the same angle
        let rot = |v: [f64; 2], th: f64| [v[0] * th.cos() - v[1] * th.sin(), v[0] * th.sin() + v[1] * th.cos()];
        let (a, p, n) = ([0.2, -0.4], [1.0, 0.3], [-0.5, 0.8]);
        let base = pair_distances(
            array![a[0], a[1]].view(),
            array![p[0], p[1]].view(),
            array![n[0], n[1]].view(),
        )
        .unwrap();
        let (ar, pr, nr) = (rot(a, 0.7), rot(p, 0.7), rot(n, 0.7));
        let rotated = pair_distances(
            array![ar[0], ar[1]].view(),
            array![pr[0], pr[1]].view(),
            array![nr[0], nr[1]].view(),
        )
        .unwrap();
        assert!((base.0 - rotated.0).abs() < TOL);
        assert!((base.1 - rotated.1).abs() < TOL);
    }

    #[test]
    fn triplet_values() {
        assert_eq!(triplet_loss(&[(0.2, 1.0)], 0.3).unwrap(), 0.0);
        let l = triplet_loss(&[(0.9, 0.5)], 0.3).unwrap();
        assert!((l - 0.7).abs() < TOL);
        // degenerate: anchor == positive == negative
        let l = triplet_loss(&[(0.0, 0.0)], 0.3).unwrap();
        assert!((l - 0.3).abs() < TOL);
        assert!(triplet_loss(&[(0.1, 0.2)], 0.0).is_err());
        assert!(triplet_loss(&[(0.1, 0.2)], -1.0).is_err());
    }

    #[test]
    fn triplet_monotone_in_distances() {
        let margin = 0.3;
        let base = triplet_loss(&[(0.6, 0.5)], margin).unwrap();
        assert!(triplet_loss(&[(0.7, 0.5)], margin).unwrap() >= base);
        assert!(triplet_loss(&[(0.6, 0.6)], margin).unwrap() <= base);
    }

    #[test]
    fn total_loss_additivity() {
        let mut adv = BTreeMap::new();
        adv.insert(1, -0.8);
        adv.insert(2, -0.5863);
        let bundle = total_loss(adv, 0.0, 0.0, 0.0, 0.3, LossWeights::default());
        assert!((bundle.adv_sum + 1.3863).abs() < 1e-9);
        assert!((bundle.total - bundle.adv_sum).abs() < TOL);

        let mut adv = BTreeMap::new();
        adv.insert(2, -1.0);
        let with = total_loss(adv.clone(), 0.4, 0.3, 0.2, 0.3, LossWeights::default());
        let without = total_loss(adv, 0.4, 0.0, 0.2, 0.3, LossWeights::default());
        assert!((with.total - without.total - 0.3).abs() < TOL);
        assert!(
            (with.total - (with.adv_sum + with.rec + with.cls + with.tri)).abs() < TOL,
            "unit-weight additivity"
        );
    }

    #[test]
    fn minmax_views_match_total_in_minimax_mode() {
        let mut adv = BTreeMap::new();
        adv.insert(1, -0.9);
        let bundle = total_loss(adv, 0.1, 0.2, 0.3, 0.3, LossWeights::default());
        let views = minmax_views(&bundle, bundle.adv_sum, LossWeights::default());
        assert!((views.generator_descends - bundle.total).abs() < TOL);
        assert!((views.discriminator_ascends - bundle.adv_sum).abs() < TOL);
    }
}
