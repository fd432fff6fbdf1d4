//! Softmax and class-weighted cross-entropy.

use crate::tensor::Tensor;
use crate::{NnError, Result};

/// Row-wise softmax of [B,K] logits.
pub fn softmax(logits: &Tensor) -> Tensor {
    let k = logits.cols();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(k) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Single-sample weighted cross-entropy.
/// loss = w[label] · (−log softmax(logits)[label]);
/// grad = w[label] · (softmax − onehot).
pub fn weighted_xent(
    logits: &[f64],
    label: usize,
    class_weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFinite("weighted_xent logits"));
    }
    assert!(label < logits.len(), "label out of range");
    assert_eq!(logits.len(), class_weights.len(), "one weight per class");
    assert!(class_weights.iter().all(|&w| w > 0.0), "weights must be positive");
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let w = class_weights[label];
    let log_p = (exps[label] / sum).ln();
    let loss = -w * log_p;
    let grad: Vec<f64> = exps
        .iter()
        .enumerate()
        .map(|(j, &e)| w * (e / sum - if j == label { 1.0 } else { 0.0 }))
        .collect();
    Ok((loss, grad))
}

/// Batch version: mean of per-sample weighted losses; gradient carries the
/// 1/B factor.
pub fn weighted_xent_batch(
    logits: &Tensor,
    labels: &[usize],
    class_weights: &[f64],
) -> Result<(f64, Tensor)> {
    let (b, k) = (logits.rows(), logits.cols());
    assert_eq!(labels.len(), b, "one label per row");
    let mut grad = Tensor::zeros(&[b, k]);
    let mut total = 0.0;
    let inv_b = 1.0 / b as f64;
    for (r, &label) in labels.iter().enumerate() {
        let (loss, g) = weighted_xent(logits.row(r), label, class_weights)?;
        total += loss;
        for (dst, gv) in grad.row_mut(r).iter_mut().zip(g.iter()) {
            *dst = gv * inv_b;
        }
    }
    Ok((total * inv_b, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_two_classes_unit_weight() {
        let (loss, _) = weighted_xent(&[0.3, 0.3], 0, &[1.0, 1.0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn unit_weights_reduce_to_plain_cross_entropy() {
        let logits = [0.5, -1.0, 2.0];
        let (loss, grad) = weighted_xent(&logits, 2, &[1.0, 1.0, 1.0]).unwrap();
        // plain cross-entropy recomputed directly
        let max = 2.0;
        let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let expected = -(exps[2] / sum).ln();
        assert!((loss - expected).abs() < 1e-12);
        let gsum: f64 = grad.iter().sum();
        assert!(gsum.abs() < 1e-12, "gradient sums to zero for unit weights");
    }

    #[test]
    fn doubling_the_label_weight_doubles_loss_and_grad() {
        let logits = [0.1, 0.7, -0.4];
        let (l1, g1) = weighted_xent(&logits, 1, &[1.0, 2.0, 1.0]).unwrap();
        let (l2, g2) = weighted_xent(&logits, 1, &[1.0, 4.0, 1.0]).unwrap();
        assert!((l2 - 2.0 * l1).abs() < 1e-12);
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert!((b - 2.0 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_stay_positive() {
        let t = Tensor::from_vec(&[2, 3], vec![100.0, 0.0, -100.0, 0.1, 0.2, 0.3]).unwrap();
        let s = softmax(&t);
        for row in s.data().chunks(3) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn non_finite_logits_are_rejected() {
        assert!(weighted_xent(&[f64::NAN, 0.0], 0, &[1.0, 1.0]).is_err());
    }
}
