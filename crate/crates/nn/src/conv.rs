//! 2-D convolution (cross-correlation, valid padding, stride 1) and
//! non-overlapping max pooling.
//!
//! Convolution lowers to an im2col matrix product so the forward and both
//! weight/input gradients run through the blocked parallel matmul.

use crate::tensor::Tensor;
use crate::{NnError, Result};
use rayon::prelude::*;

pub struct Conv2dCache {
    pub x: Tensor,
}

/// Unrolls input patches: rows = B·HO·WO, cols = CIN·KH·KW.
fn im2col(x: &Tensor, kh: usize, kw: usize) -> Tensor {
    let [b, cin, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let (ho, wo) = (h - kh + 1, w - kw + 1);
    let k = cin * kh * kw;
    let mut cols = Tensor::zeros(&[b * ho * wo, k]);
    let xd = x.data();
    let rows_per_sample = ho * wo;
    cols.data_mut()
        .par_chunks_mut(rows_per_sample * k)
        .enumerate()
        .for_each(|(bi, chunk)| {
            let xs = &xd[bi * cin * h * w..(bi + 1) * cin * h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    let row = &mut chunk[(oy * wo + ox) * k..(oy * wo + ox + 1) * k];
                    let mut c = 0;
                    for ci in 0..cin {
                        let plane = &xs[ci * h * w..(ci + 1) * h * w];
                        for ky in 0..kh {
                            let src = &plane[(oy + ky) * w + ox..(oy + ky) * w + ox + kw];
                            row[c..c + kw].copy_from_slice(src);
                            c += kw;
                        }
                    }
                }
            }
        });
    cols
}

/// Scatter-adds column gradients back into the input layout.
fn col2im(grad_cols: &Tensor, shape: &[usize], kh: usize, kw: usize) -> Tensor {
    let [_b, cin, h, w] = [shape[0], shape[1], shape[2], shape[3]];
    let (ho, wo) = (h - kh + 1, w - kw + 1);
    let k = cin * kh * kw;
    let mut grad_x = Tensor::zeros(shape);
    let gd = grad_cols.data();
    let rows_per_sample = ho * wo;
    grad_x
        .data_mut()
        .par_chunks_mut(cin * h * w)
        .enumerate()
        .for_each(|(bi, xs)| {
            let chunk = &gd[bi * rows_per_sample * k..(bi + 1) * rows_per_sample * k];
            for oy in 0..ho {
                for ox in 0..wo {
                    let row = &chunk[(oy * wo + ox) * k..(oy * wo + ox + 1) * k];
                    let mut c = 0;
                    for ci in 0..cin {
                        let plane = &mut xs[ci * h * w..(ci + 1) * h * w];
                        for ky in 0..kh {
                            let dst = &mut plane[(oy + ky) * w + ox..(oy + ky) * w + ox + kw];
                            for (d, &g) in dst.iter_mut().zip(row[c..c + kw].iter()) {
                                *d += g;
                            }
                            c += kw;
                        }
                    }
                }
            }
        });
    grad_x
}

/// [m, COUT] row-major product values rearranged to [B, COUT, HO, WO].
fn cols_to_feature_map(prod: &Tensor, b: usize, cout: usize, ho: usize, wo: usize) -> Tensor {
    let mut out = Tensor::zeros(&[b, cout, ho, wo]);
    let plane = ho * wo;
    let pd = prod.data();
    out.data_mut()
        .par_chunks_mut(cout * plane)
        .enumerate()
        .for_each(|(bi, sample)| {
            for p in 0..plane {
                let row = &pd[(bi * plane + p) * cout..(bi * plane + p + 1) * cout];
                for (co, &v) in row.iter().enumerate() {
                    sample[co * plane + p] = v;
                }
            }
        });
    out
}

/// Inverse of `cols_to_feature_map` for gradients.
fn feature_map_to_cols(grad_out: &Tensor) -> Tensor {
    let [b, cout, ho, wo] = [
        grad_out.shape()[0],
        grad_out.shape()[1],
        grad_out.shape()[2],
        grad_out.shape()[3],
    ];
    let plane = ho * wo;
    let mut prod = Tensor::zeros(&[b * plane, cout]);
    let gd = grad_out.data();
    prod.data_mut()
        .par_chunks_mut(plane * cout)
        .enumerate()
        .for_each(|(bi, chunk)| {
            let sample = &gd[bi * cout * plane..(bi + 1) * cout * plane];
            for p in 0..plane {
                for co in 0..cout {
                    chunk[p * cout + co] = sample[co * plane + p];
                }
            }
        });
    prod
}

/// x [B,Cin,H,W] ⋆ kernel [Cout,Cin,KH,KW] + bias [Cout] -> [B,Cout,H',W']
/// with H' = H-KH+1, W' = W-KW+1. No kernel flip.
pub fn conv2d(x: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<(Tensor, Conv2dCache)> {
    let [b, cin, h, w] = dims4(x, "conv2d input")?;
    let [cout, cin_k, kh, kw] = dims4(kernel, "conv2d kernel")?;
    if cin != cin_k || bias.len() != cout || kh > h || kw > w {
        return Err(NnError::ShapeMismatch {
            context: "conv2d",
            expected: vec![cout, cin, kh.min(h), kw.min(w)],
            got: kernel.shape().to_vec(),
        });
    }
    let (ho, wo) = (h - kh + 1, w - kw + 1);
    let k = cin * kh * kw;
    let cols = im2col(x, kh, kw);
    let kernel2d = Tensor::from_vec(&[cout, k], kernel.data().to_vec()).expect("kernel reshape");
    // [m,k]·[cout,k]ᵀ
    let mut prod = cols.matmul_transpose_rhs(&kernel2d);
    for row in prod.data_mut().chunks_mut(cout) {
        for (v, &bv) in row.iter_mut().zip(bias.data().iter()) {
            *v += bv;
        }
    }
    let out = cols_to_feature_map(&prod, b, cout, ho, wo);
    Ok((out, Conv2dCache { x: x.clone() }))
}

/// Returns (grad_x, grad_kernel, grad_bias).
pub fn conv2d_backward(
    grad_out: &Tensor,
    kernel: &Tensor,
    cache: &Conv2dCache,
) -> Result<(Tensor, Tensor, Tensor)> {
    let [b, cin, h, w] = dims4(&cache.x, "conv2d_backward input")?;
    let [cout, _, kh, kw] = dims4(kernel, "conv2d_backward kernel")?;
    let [bo, co_g, ho, wo] = dims4(grad_out, "conv2d_backward grad")?;
    if bo != b || co_g != cout || ho != h - kh + 1 || wo != w - kw + 1 {
        return Err(NnError::ShapeMismatch {
            context: "conv2d_backward",
            expected: vec![b, cout, h - kh + 1, w - kw + 1],
            got: grad_out.shape().to_vec(),
        });
    }
    let k = cin * kh * kw;
    let cols = im2col(&cache.x, kh, kw);
    let prod_grad = feature_map_to_cols(grad_out); // [m, cout]
    let kernel2d = Tensor::from_vec(&[cout, k], kernel.data().to_vec()).expect("kernel reshape");

    // dK [cout,k] = prod_gradᵀ · cols
    let grad_k2d = prod_grad.matmul_transpose_self(&cols);
    let grad_kernel =
        Tensor::from_vec(kernel.shape(), grad_k2d.into_data()).expect("kernel grad reshape");
    // dCols [m,k] = prod_grad · kernel2d
    let grad_cols = prod_grad.matmul(&kernel2d);
    let grad_x = col2im(&grad_cols, cache.x.shape(), kh, kw);
    let grad_bias = prod_grad.sum_rows();
    Ok((grad_x, grad_kernel, grad_bias))
}

pub struct MaxPoolCache {
    /// flat input index of the chosen maximum, per output element
    pub argmax: Vec<usize>,
    pub input_shape: Vec<usize>,
    pub window: (usize, usize),
}

/// Non-overlapping max pooling over [B,C,H,W] with window (ph, pw).
/// The window must divide the spatial extents. Ties go to the lowest flat
/// index.
pub fn maxpool(x: &Tensor, window: (usize, usize)) -> Result<(Tensor, MaxPoolCache)> {
    let [b, c, h, w] = dims4(x, "maxpool input")?;
    let (ph, pw) = window;
    if ph == 0 || pw == 0 || !h.is_multiple_of(ph) || !w.is_multiple_of(pw) {
        return Err(NnError::PoolWindow {
            window,
            extent: (h, w),
        });
    }
    let (ho, wo) = (h / ph, w / pw);
    let mut out = Tensor::zeros(&[b, c, ho, wo]);
    let mut argmax = vec![0usize; out.len()];
    let xd = x.data();
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * h * w;
            let obase = (bi * c + ci) * ho * wo;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_ix = 0usize;
                    for dy in 0..ph {
                        for dx in 0..pw {
                            let ix = base + (oy * ph + dy) * w + ox * pw + dx;
                            if xd[ix] > best {
                                best = xd[ix];
                                best_ix = ix;
                            }
                        }
                    }
                    out.data_mut()[obase + oy * wo + ox] = best;
                    argmax[obase + oy * wo + ox] = best_ix;
                }
            }
        }
    }
    Ok((
        out,
        MaxPoolCache {
            argmax,
            input_shape: x.shape().to_vec(),
            window,
        },
    ))
}

pub fn maxpool_backward(grad_out: &Tensor, cache: &MaxPoolCache) -> Tensor {
    let mut grad_x = Tensor::zeros(&cache.input_shape);
    for (g, &ix) in grad_out.data().iter().zip(cache.argmax.iter()) {
        grad_x.data_mut()[ix] += g;
    }
    grad_x
}

fn dims4(t: &Tensor, context: &'static str) -> Result<[usize; 4]> {
    let s = t.shape();
    if s.len() != 4 {
        return Err(NnError::ShapeMismatch {
            context,
            expected: vec![0, 0, 0, 0],
            got: s.to_vec(),
        });
    }
    Ok([s[0], s[1], s[2], s[3]])
}
