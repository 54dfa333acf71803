//! Training losses. Each returns `(loss, d loss / d pred)` so callers feed the
//! gradient straight into `Sequential::backward`.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Probability clamp inside the cross-entropy log; keeps the loss finite when
/// a predicted probability underflows to zero.
pub const CE_EPS: f64 = 1e-7;

/// Mean squared error over all elements.
pub fn mse_loss<E: Scalar>(pred: &Tensor<E>, target: &Tensor<E>) -> Result<(E, Tensor<E>)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mse_loss", format!("{:?}", pred.shape()), format!("{:?}", target.shape())));
    }
    let n = E::from_f64(pred.numel() as f64);
    let mut grad = pred.clone();
    let mut loss = E::ZERO;
    let two = E::from_f64(2.0);
    for (g, t) in grad.data_mut().iter_mut().zip(target.data()) {
        let d = *g - *t;
        loss += d * d;
        *g = two * d / n;
    }
    Ok((loss / n, grad))
}

/// Mean absolute error over all elements.
pub fn l1_loss<E: Scalar>(pred: &Tensor<E>, target: &Tensor<E>) -> Result<(E, Tensor<E>)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("l1_loss", format!("{:?}", pred.shape()), format!("{:?}", target.shape())));
    }
    let n = E::from_f64(pred.numel() as f64);
    let mut grad = pred.clone();
    let mut loss = E::ZERO;
    for (g, t) in grad.data_mut().iter_mut().zip(target.data()) {
        let d = *g - *t;
        loss += d.abs();
        *g = if d > E::ZERO {
            E::ONE / n
        } else if d < E::ZERO {
            -E::ONE / n
        } else {
            E::ZERO
        };
    }
    Ok((loss / n, grad))
}

fn ce_dims<E: Scalar>(pred: &Tensor<E>, k: usize) -> Result<(usize, usize)> {
    // Accepts [k, h, w] or [n, k, h, w]; returns (n, pixels per image).
    match pred.shape() {
        [c, h, w] if *c == k => Ok((1, h * w)),
        [n, c, h, w] if *c == k => Ok((*n, h * w)),
        other => Err(Error::shape("cross-entropy pred", format!("[k={k}, h, w] or [n, k={k}, h, w]"), format!("{:?}", other))),
    }
}

/// Per-pixel weighted categorical cross-entropy, averaged over all pixels:
/// each pixel contributes `-sum_j t_j * log(p_j) * w_j`.
pub fn weighted_cross_entropy<E: Scalar>(pred: &Tensor<E>, target_onehot: &Tensor<E>, weights: &[E]) -> Result<(E, Tensor<E>)> {
    let k = weights.len();
    let (n, hw) = ce_dims(pred, k)?;
    if pred.shape() != target_onehot.shape() {
        return Err(Error::shape("cross-entropy target", format!("{:?}", pred.shape()), format!("{:?}", target_onehot.shape())));
    }
    let eps = E::from_f64(CE_EPS);
    let n_pix = E::from_f64((n * hw) as f64);
    let mut grad = Tensor::zeros(pred.shape().to_vec());
    let mut loss = E::ZERO;
    let p = pred.data();
    let t = target_onehot.data();
    let g = grad.data_mut();
    for i in 0..n {
        for ch in 0..k {
            let w = weights[ch];
            let base = (i * k + ch) * hw;
            for off in 0..hw {
                let idx = base + off;
                let tv = t[idx];
                if tv != E::ZERO {
                    let pv = p[idx].max_s(eps);
                    loss -= tv * pv.ln() * w;
                    g[idx] = -(tv * w) / (pv * n_pix);
                }
            }
        }
    }
    Ok((loss / n_pix, grad))
}

/// Same loss with targets given as per-pixel class ids (`labels[i*hw + p]`).
pub fn weighted_cross_entropy_labels<E: Scalar>(pred: &Tensor<E>, labels: &[u8], weights: &[E]) -> Result<(E, Tensor<E>)> {
    let k = weights.len();
    let (n, hw) = ce_dims(pred, k)?;
    if labels.len() != n * hw {
        return Err(Error::shape("cross-entropy labels", n * hw, labels.len()));
    }
    let eps = E::from_f64(CE_EPS);
    let n_pix = E::from_f64((n * hw) as f64);
    let mut grad = Tensor::zeros(pred.shape().to_vec());
    let mut loss = E::ZERO;
    let p = pred.data();
    let g = grad.data_mut();
    for i in 0..n {
        for off in 0..hw {
            let cls = labels[i * hw + off] as usize;
            debug_assert!(cls < k);
            let w = weights[cls];
            let idx = (i * k + cls) * hw + off;
            let pv = p[idx].max_s(eps);
            loss -= pv.ln() * w;
            g[idx] = -w / (pv * n_pix);
        }
    }
    Ok((loss / n_pix, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_trivials() {
        let a = Tensor::new(vec![2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let (l, _) = mse_loss(&a, &a).unwrap();
        assert_eq!(l, 0.0);
        let b = a.map(|v| v + 1.0);
        let (l, g) = mse_loss(&b, &a).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        // grad = 2*(pred-target)/n = 2/4
        assert!(g.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn mse_matches_direct_sum() {
        // Brute-force oracle: explicit sum of squared differences.
        let pred_v = [0.3f64, -1.2, 2.7, 0.05, -0.4, 1.1];
        let targ_v = [0.1f64, -1.0, 2.0, 0.0, 0.4, 1.3];
        let mut acc = 0.0;
        for (p, t) in pred_v.iter().zip(&targ_v) {
            acc += (p - t) * (p - t);
        }
        let oracle = acc / pred_v.len() as f64;
        let pred = Tensor::new(vec![6], pred_v.to_vec()).unwrap();
        let targ = Tensor::new(vec![6], targ_v.to_vec()).unwrap();
        let (l, _) = mse_loss(&pred, &targ).unwrap();
        assert!((l - oracle).abs() < 1e-15);
    }

    #[test]
    fn ce_perfect_prediction_is_zero() {
        // One pixel, class 1 of 3, prediction exactly one-hot.
        let pred = Tensor::new(vec![3, 1, 1], vec![0.0f64, 1.0, 0.0]).unwrap();
        let (l, _) = weighted_cross_entropy(&pred, &pred.clone(), &[5.0, 2.0, 1.0]).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn ce_uniform_prediction_is_ln_k() {
        let k = 7usize;
        let hw = 4usize;
        let pred = Tensor::filled(vec![k, 2, 2], 1.0f64 / k as f64);
        let labels: Vec<u8> = (0..hw as u8).collect();
        let (l, _) = weighted_cross_entropy_labels(&pred, &labels, &vec![1.0; k]).unwrap();
        assert!((l - (k as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_weighted_single_pixel() {
        // Direct evaluation: target class 0, p = 0.5, weight 2 -> 2*ln 2.
        let pred = Tensor::new(vec![3, 1, 1], vec![0.5f64, 0.25, 0.25]).unwrap();
        let (l, g) = weighted_cross_entropy_labels(&pred, &[0], &[2.0, 1.0, 1.0]).unwrap();
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        // grad at target: -w/p = -4; zero elsewhere
        assert!((g.data()[0] + 4.0).abs() < 1e-12);
        assert_eq!(g.data()[1], 0.0);
    }

    #[test]
    fn ce_zero_probability_clamped() {
        let pred = Tensor::new(vec![2, 1, 1], vec![0.0f64, 1.0]).unwrap();
        let (l, g) = weighted_cross_entropy_labels(&pred, &[0], &[1.0, 1.0]).unwrap();
        assert!(l.is_finite());
        assert!(g.data()[0].is_finite());
        assert!((l - -(CE_EPS.ln())).abs() < 1e-9);
    }

    #[test]
    fn ce_unit_weights_match_unweighted_form() {
        // Unweighted categorical cross-entropy computed independently.
        let pred_v = vec![0.6f64, 0.3, 0.1, 0.2, 0.5, 0.3, 0.25, 0.25, 0.5, 0.1, 0.8, 0.1];
        // shape [3, 2, 2]: channel-major per pixel: p(ch, pix) = pred_v[ch*4 + pix]
        let pred = Tensor::new(vec![3, 2, 2], pred_v.clone()).unwrap();
        let labels = [0u8, 1, 2, 1];
        let mut oracle = 0.0;
        for (pix, &cls) in labels.iter().enumerate() {
            oracle -= pred_v[cls as usize * 4 + pix].ln();
        }
        oracle /= 4.0;
        let (l, _) = weighted_cross_entropy_labels(&pred, &labels, &[1.0, 1.0, 1.0]).unwrap();
        assert!((l - oracle).abs() < 1e-12);
    }

    #[test]
    fn l1_trivials() {
        let a = Tensor::new(vec![3], vec![1.0f64, -2.0, 0.5]).unwrap();
        let b = Tensor::new(vec![3], vec![0.0f64, -1.0, 1.0]).unwrap();
        let (l, g) = l1_loss(&a, &b).unwrap();
        assert!((l - (1.0 + 1.0 + 0.5) / 3.0).abs() < 1e-12);
        assert_eq!(g.data()[0], 1.0 / 3.0);
        assert_eq!(g.data()[1], -1.0 / 3.0);
        assert_eq!(g.data()[2], -1.0 / 3.0);
    }
}
