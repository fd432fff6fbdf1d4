//! Embedding table lookup with scatter-add backward.

use crate::tensor::Tensor;

/// table [V,D], indices [B] -> [B,D]
pub fn embedding_lookup(table: &Tensor, indices: &[usize]) -> Tensor {
    let d = table.cols();
    let mut out = Tensor::zeros(&[indices.len(), d]);
    for (b, &ix) in indices.iter().enumerate() {
        assert!(ix < table.rows(), "embedding index {ix} out of range");
        out.row_mut(b).copy_from_slice(table.row(ix));
    }
    out
}

/// grad_out [B,D] scattered back into a [V,D] gradient.
pub fn embedding_lookup_backward(
    grad_out: &Tensor,
    indices: &[usize],
    vocab: usize,
) -> Tensor {
    let d = grad_out.cols();
    let mut grad_table = Tensor::zeros(&[vocab, d]);
    for (b, &ix) in indices.iter().enumerate() {
        let src = grad_out.row(b);
        let dst = grad_table.row_mut(ix);
        for (o, &g) in dst.iter_mut().zip(src.iter()) {
            *o += g;
        }
    }
    grad_table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_and_scatter_roundtrip() {
        let table = Tensor::from_vec(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let out = embedding_lookup(&table, &[2, 0, 2]);
        assert_eq!(out.data(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        // duplicated index accumulates
        let grad = embedding_lookup_backward(&out, &[2, 0, 2], 3);
        assert_eq!(grad.row(2), &[10.0, 12.0]);
        assert_eq!(grad.row(0), &[1.0, 2.0]);
        assert_eq!(grad.row(1), &[0.0, 0.0]);
    }
}
