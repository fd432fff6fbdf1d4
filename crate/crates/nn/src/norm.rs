//! Batch normalization over the feature axis of a [B,C] tensor.
//!
//! Training mode normalizes with batch statistics and folds them into the
//! running estimates; inference mode uses the running estimates. Running
//! variance stores the same biased (divide-by-B) statistic the forward pass
//! uses, so inference reproduces train-mode output exactly whenever batch
//! statistics equal the running ones.

use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub scale: Tensor,
    pub shift: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

pub struct BatchNormCache {
    pub x_hat: Tensor,
    pub centered: Tensor,
    pub inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        BatchNorm {
            scale: Tensor::filled(&[features], 1.0),
            shift: Tensor::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::filled(&[features], 1.0),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn features(&self) -> usize {
        self.scale.len()
    }

    /// Train-mode forward; updates running statistics.
    pub fn forward_train(&mut self, x: &Tensor) -> (Tensor, BatchNormCache) {
        let (b, c) = (x.rows(), x.cols());
        assert_eq!(c, self.features(), "batchnorm feature width");
        let bf = b as f64;
        let mut mean = vec![0.0; c];
        for row in x.data().chunks(c) {
            for (m, &v) in mean.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= bf;
        }
        let mut var = vec![0.0; c];
        for row in x.data().chunks(c) {
            for ((s, &v), &m) in var.iter_mut().zip(row.iter()).zip(mean.iter()) {
                *s += (v - m) * (v - m);
            }
        }
        for v in &mut var {
            *v /= bf;
        }
        for k in 0..c {
            let rm = self.running_mean.data_mut();
            rm[k] = (1.0 - self.momentum) * rm[k] + self.momentum * mean[k];
            let rv = self.running_var.data_mut();
            rv[k] = (1.0 - self.momentum) * rv[k] + self.momentum * var[k];
        }
        self.normalize(x, &mean, &var)
    }

    /// Inference-mode forward with running statistics.
    pub fn forward_infer(&self, x: &Tensor) -> Tensor {
        let mean = self.running_mean.data().to_vec();
        let var = self.running_var.data().to_vec();
        self.normalize(x, &mean, &var).0
    }

    fn normalize(&self, x: &Tensor, mean: &[f64], var: &[f64]) -> (Tensor, BatchNormCache) {
        let c = x.cols();
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut centered = x.clone();
        for row in centered.data_mut().chunks_mut(c) {
            for (v, &m) in row.iter_mut().zip(mean.iter()) {
                *v -= m;
            }
        }
        let mut x_hat = centered.clone();
        for row in x_hat.data_mut().chunks_mut(c) {
            for (v, &s) in row.iter_mut().zip(inv_std.iter()) {
                *v *= s;
            }
        }
        let mut y = x_hat.clone();
        for row in y.data_mut().chunks_mut(c) {
            for ((v, &g), &sh) in row
                .iter_mut()
                .zip(self.scale.data().iter())
                .zip(self.shift.data().iter())
            {
                *v = *v * g + sh;
            }
        }
        (
            y,
            BatchNormCache {
                x_hat,
                centered,
                inv_std,
            },
        )
    }

    /// Returns (grad_x, grad_scale, grad_shift) for a train-mode forward.
    pub fn backward(&self, grad_y: &Tensor, cache: &BatchNormCache) -> (Tensor, Tensor, Tensor) {
        let (b, c) = (grad_y.rows(), grad_y.cols());
        let bf = b as f64;
        let mut grad_scale = Tensor::zeros(&[c]);
        let mut grad_shift = Tensor::zeros(&[c]);
        for (gr, xr) in grad_y.data().chunks(c).zip(cache.x_hat.data().chunks(c)) {
            for k in 0..c {
                grad_scale.data_mut()[k] += gr[k] * xr[k];
                grad_shift.data_mut()[k] += gr[k];
            }
        }
        // dx via the standard batch-statistics chain rule:
        // dx = (γ·inv_std / B) · (B·dy − Σdy − x̂·Σ(dy·x̂))
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        for (gr, xr) in grad_y.data().chunks(c).zip(cache.x_hat.data().chunks(c)) {
            for k in 0..c {
                sum_dy[k] += gr[k];
                sum_dy_xhat[k] += gr[k] * xr[k];
            }
        }
        let mut grad_x = Tensor::zeros(&[b, c]);
        for ((gx, gr), xr) in grad_x
            .data_mut()
            .chunks_mut(c)
            .zip(grad_y.data().chunks(c))
            .zip(cache.x_hat.data().chunks(c))
        {
            for k in 0..c {
                let g = self.scale.data()[k];
                gx[k] = g * cache.inv_std[k] / bf
                    * (bf * gr[k] - sum_dy[k] - xr[k] * sum_dy_xhat[k]);
            }
        }
        (grad_x, grad_scale, grad_shift)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init;

    #[test]
    fn inference_equals_train_when_stats_match() {
        let mut rng = init::stream(5, "bn/statmatch");
        let x = init::normal(&[8, 3], 1.0, 2.0, &mut rng);
        let mut bn = BatchNorm::new(3);
        // force running stats to the exact batch stats
        let (b, c) = (x.rows(), x.cols());
        for k in 0..c {
            let col: Vec<f64> = (0..b).map(|r| x.data()[r * c + k]).collect();
            let mean = col.iter().sum::<f64>() / b as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / b as f64;
            bn.running_mean.data_mut()[k] = mean;
            bn.running_var.data_mut()[k] = var;
        }
        let infer = bn.forward_infer(&x);
        let (train, _) = bn.forward_train(&x);
        for (a, b) in infer.data().iter().zip(train.data().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
