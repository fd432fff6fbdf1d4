//! Dense row-major `f64` tensor and the handful of linear-algebra ops the
//! kernels need. Matrix products parallelize over output rows with a fixed
//! per-row reduction order, so results are identical for any thread count.

use crate::{NnError, Result};
use rayon::prelude::*;

/// Row-major dense tensor of `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Below this many output elements a matmul stays single-threaded.
const PAR_THRESHOLD: usize = 16 * 1024;

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(NnError::LengthMismatch {
                len: data.len(),
                shape: shape.to_vec(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Number of rows when viewed as a 2-D matrix.
    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "rows() requires a rank-2 tensor");
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "cols() requires a rank-2 tensor");
        self.shape[1]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn check_shape(&self, expected: &[usize], context: &'static str) -> Result<()> {
        if self.shape != expected {
            return Err(NnError::ShapeMismatch {
                context,
                expected: expected.to_vec(),
                got: self.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise combination of two same-shape tensors.
    pub fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape, other.shape, "zip requires equal shapes");
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign requires equal shapes");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// self [m,k] · rhs [k,n] -> [m,n]
    pub fn matmul(&self, rhs: &Tensor) -> Tensor {
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (rhs.shape[0], rhs.shape[1]);
        assert_eq!(k, k2, "matmul inner dimensions differ");
        let mut out = Tensor::zeros(&[m, n]);
        let a = &self.data;
        let b = &rhs.data;
        let body = |i: usize, row_out: &mut [f64]| {
            for p in 0..k {
                let aik = a[i * k + p];
                if aik == 0.0 {
                    continue;
                }
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in row_out.iter_mut().zip(brow.iter()) {
                    *o += aik * bv;
                }
            }
        };
        if m * n >= PAR_THRESHOLD && m > 1 {
            out.data
                .par_chunks_mut(n)
                .enumerate()
                .for_each(|(i, row)| body(i, row));
        } else {
            for (i, row) in out.data.chunks_mut(n).enumerate() {
                body(i, row);
            }
        }
        out
    }

    /// selfᵀ [k,m]ᵀ · rhs [k,n] -> [m,n]; used for weight gradients.
    pub fn matmul_transpose_self(&self, rhs: &Tensor) -> Tensor {
        let (k, m) = (self.shape[0], self.shape[1]);
        let (k2, n) = (rhs.shape[0], rhs.shape[1]);
        assert_eq!(k, k2, "matmul_transpose_self inner dimensions differ");
        let mut out = Tensor::zeros(&[m, n]);
        for p in 0..k {
            let arow = &self.data[p * m..(p + 1) * m];
            let brow = &rhs.data[p * n..(p + 1) * n];
            for (i, &av) in arow.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * n..(i + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                    *o += av * bv;
                }
            }
        }
        out
    }

    /// self [m,k] · rhsᵀ [n,k]ᵀ -> [m,n]; used for input gradients.
    /// Materializes the transpose so the product runs the vectorizable
    /// row-accumulation loop instead of a serial dot-product reduction.
    pub fn matmul_transpose_rhs(&self, rhs: &Tensor) -> Tensor {
        let (k2, n) = (rhs.shape[1], rhs.shape[0]);
        assert_eq!(self.shape[1], k2, "matmul_transpose_rhs inner dimensions differ");
        let mut rhs_t = Tensor::zeros(&[k2, n]);
        for j in 0..n {
            let row = &rhs.data[j * k2..(j + 1) * k2];
            for (p, &v) in row.iter().enumerate() {
                rhs_t.data[p * n + j] = v;
            }
        }
        self.matmul(&rhs_t)
    }

    /// Adds a [n]-shaped bias to every row of a [m,n] tensor.
    pub fn add_row_broadcast(&self, bias: &Tensor) -> Tensor {
        let n = self.shape[1];
        assert_eq!(bias.len(), n, "bias length must match column count");
        let mut out = self.clone();
        for row in out.data.chunks_mut(n) {
            for (o, &b) in row.iter_mut().zip(bias.data.iter()) {
                *o += b;
            }
        }
        out
    }

    /// Column sums of a [m,n] tensor -> [n]; used for bias gradients.
    pub fn sum_rows(&self) -> Tensor {
        let n = self.shape[1];
        let mut out = Tensor::zeros(&[n]);
        for row in self.data.chunks(n) {
            for (o, &v) in out.data.iter_mut().zip(row.iter()) {
                *o += v;
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::from_vec(&[3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0]).unwrap();
        let b = Tensor::from_vec(&[2, 4], (0..8).map(|v| v as f64).collect()).unwrap();
        // aᵀ·b via matmul_transpose_self
        let at_b = a.matmul_transpose_self(&b);
        let mut at = Tensor::zeros(&[3, 2]);
        for i in 0..2 {
            for j in 0..3 {
                at.data_mut()[j * 2 + i] = a.data()[i * 3 + j];
            }
        }
        assert_eq!(at_b, at.matmul(&b));
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor::from_vec(&[2, 2], vec![1.0]).is_err());
    }
}
