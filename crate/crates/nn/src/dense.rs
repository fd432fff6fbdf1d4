//! Fully connected layer: y = x·W + b.

use crate::tensor::Tensor;

/// Saved forward inputs needed by the backward pass.
pub struct DenseCache {
    pub x: Tensor,
}

/// x [B,in] · w [in,out] + b [out] -> [B,out]
pub fn dense(x: &Tensor, w: &Tensor, b: &Tensor) -> (Tensor, DenseCache) {
    let y = x.matmul(w).add_row_broadcast(b);
    (y, DenseCache { x: x.clone() })
}

/// Returns (grad_x, grad_w, grad_b).
pub fn dense_backward(grad_y: &Tensor, w: &Tensor, cache: &DenseCache) -> (Tensor, Tensor, Tensor) {
    let grad_x = grad_y.matmul_transpose_rhs(w);
    let grad_w = cache.x.matmul_transpose_self(grad_y);
    let grad_b = grad_y.sum_rows();
    (grad_x, grad_w, grad_b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_matches_hand_computation() {
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let w = Tensor::from_vec(&[2, 2], vec![0.5, -1.0, 2.0, 0.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![0.1, 0.2]).unwrap();
        let (y, _) = dense(&x, &w, &b);
        assert_eq!(y.data(), &[4.6, -0.8]);
    }
}
