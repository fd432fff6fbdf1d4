//! Shared pieces of the two model implementations: relu, column
//! concatenation, and batch assembly from window samples.

use crate::grid::WindowSample;
use impactcast_nn::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub w: Tensor,
    pub b: Tensor,
}

pub fn relu(x: &Tensor) -> (Tensor, Tensor) {
    let y = x.map(|v| v.max(0.0));
    let mask = x.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    (y, mask)
}

pub fn relu_backward(grad: &Tensor, mask: &Tensor) -> Tensor {
    grad.zip(mask, |g, m| g * m)
}

/// [B,a] ++ [B,b] -> [B,a+b]
pub fn concat_cols(left: &Tensor, right: &Tensor) -> Tensor {
    let b = left.rows();
    assert_eq!(b, right.rows(), "concat batch sizes differ");
    let (a, c) = (left.cols(), right.cols());
    let mut out = Tensor::zeros(&[b, a + c]);
    for r in 0..b {
        out.row_mut(r)[..a].copy_from_slice(left.row(r));
        out.row_mut(r)[a..].copy_from_slice(right.row(r));
    }
    out
}

/// Splits [B,a+b] back into ([B,a], [B,b]).
pub fn split_cols(t: &Tensor, a: usize) -> (Tensor, Tensor) {
    let b = t.rows();
    let total = t.cols();
    let mut left = Tensor::zeros(&[b, a]);
    let mut right = Tensor::zeros(&[b, total - a]);
    for r in 0..b {
        left.row_mut(r).copy_from_slice(&t.row(r)[..a]);
        right.row_mut(r).copy_from_slice(&t.row(r)[a..]);
    }
    (left, right)
}

/// Per-feature standardization statistics computed over a training pool's
/// sequence values. Constant columns get unit scale so they pass through
/// unchanged (masked ablation columns stay zero).
pub fn feature_stats(samples: &[WindowSample], f: usize) -> (Tensor, Tensor) {
    let mut mean = vec![0.0; f];
    let mut count = 0u64;
    for s in samples {
        for row in s.sequence.chunks(f) {
            for (m, &v) in mean.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        count += (s.sequence.len() / f) as u64;
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    let mut var = vec![0.0; f];
    for s in samples {
        for row in s.sequence.chunks(f) {
            for ((v, &x), &m) in var.iter_mut().zip(row.iter()).zip(mean.iter()) {
                *v += (x - m) * (x - m);
            }
        }
    }
    let std: Vec<f64> = var
        .into_iter()
        .map(|v| {
            let s = (v / count as f64).sqrt();
            if s < 1e-12 {
                1.0
            } else {
                s
            }
        })
        .collect();
    (
        Tensor::from_vec(&[f], mean).expect("mean shape"),
        Tensor::from_vec(&[f], std).expect("std shape"),
    )
}

/// Applies (x − mean) / std per feature column to every row of a [B,F]
/// tensor.
pub fn standardize_rows(t: &mut Tensor, mean: &Tensor, std: &Tensor) {
    let f = mean.len();
    for row in t.data_mut().chunks_mut(f) {
        for ((v, &m), &s) in row.iter_mut().zip(mean.data().iter()).zip(std.data().iter()) {
            *v = (*v - m) / s;
        }
    }
}

/// Per-step input tensors (w of them, each [B,F]) plus zone indices for one
/// minibatch of samples.
pub fn sequence_batch(samples: &[&WindowSample], w: usize, f: usize) -> (Vec<Tensor>, Vec<usize>) {
    let b = samples.len();
    let mut xs = vec![Tensor::zeros(&[b, f]); w];
    for (r, s) in samples.iter().enumerate() {
        debug_assert_eq!(s.sequence.len(), w * f, "sample sequence length");
        for (t, step) in xs.iter_mut().enumerate() {
            step.row_mut(r).copy_from_slice(&s.sequence[t * f..(t + 1) * f]);
        }
    }
    let zones = samples.iter().map(|s| s.zone_index).collect();
    (xs, zones)
}

/// One [B,1,w,F] image tensor per minibatch, for the convolutional model.
pub fn image_batch(samples: &[&WindowSample], w: usize, f: usize) -> Tensor {
    let b = samples.len();
    let mut out = Tensor::zeros(&[b, 1, w, f]);
    let plane = w * f;
    for (r, s) in samples.iter().enumerate() {
        out.data_mut()[r * plane..(r + 1) * plane].copy_from_slice(&s.sequence);
    }
    out
}

/// Stored tensor layout metadata shared by both model serializers.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelMeta<A> {
    pub arch: A,
    pub input_dim: usize,
    pub n_classes: usize,
    pub extra: std::collections::BTreeMap<String, usize>,
}
