//! The accident-impact label: fit a delay model on congestion events,
//! transfer it to accidents, and split the resulting gamma values at the
//! training-period median.
//!
//! Severity enters one-hot (it is categorical); duration, distance, and the
//! delay target are min-max normalized to [0,1] with the normalization frozen
//! at fit time. Gamma values therefore live in normalized delay units.
//! Median ties classify as medium (class 1), and test-period accidents reuse
//! the training-period median.

use crate::logging;
use crate::stats;
use impactcast_nn::{
    adam_step, dense, dense_backward, init, AdamConfig, AdamState, Tensor,
};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GammaError {
    #[error("need at least {need} records to fit, got {got}")]
    TooFewRecords { need: usize, got: usize },
    #[error("degenerate design matrix: {0}")]
    DegenerateDesign(String),
    #[error("non-finite loss at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("model file error: {0}")]
    ModelFile(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// The three accident attributes the impact function reads.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactTriple {
    pub severity: u8,
    pub duration_min: f64,
    pub distance_miles: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaKind {
    Linear,
    Mlp,
}

/// Min-max ranges frozen at fit time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Normalization {
    pub severities: Vec<u8>,
    pub duration: (f64, f64),
    pub distance: (f64, f64),
    pub target: (f64, f64),
}

impl Normalization {
    fn scale(v: f64, (lo, hi): (f64, f64)) -> f64 {
        if hi > lo {
            (v - lo) / (hi - lo)
        } else {
            0.0
        }
    }

    /// One-hot severity plus the two scaled numerics.
    pub fn encode(&self, t: &ImpactTriple) -> (Vec<f64>, bool) {
        let k = self.severities.len();
        let mut x = vec![0.0; k + 2];
        let known = match self.severities.iter().position(|&s| s == t.severity) {
            Some(ix) => {
                x[ix] = 1.0;
                true
            }
            None => false,
        };
        x[k] = Self::scale(t.duration_min, self.duration);
        x[k + 1] = Self::scale(t.distance_miles, self.distance);
        (x, known)
    }

    pub fn input_dim(&self) -> usize {
        self.severities.len() + 2
    }
}

#[derive(Debug, Clone)]
pub struct GammaModel {
    pub kind: GammaKind,
    pub norm: Normalization,
    /// linear: one [input_dim] coefficient vector.
    /// mlp: alternating weight [in,out] and bias [out] tensors for the
    /// 4-hidden-layer (3 neurons each) + 1-output stack.
    pub layers: Vec<LayerWeights>,
}

/// On-disk manifest: kind, shapes, and normalization; weight values live in
/// the binary companion file.
#[derive(Debug, Serialize, Deserialize)]
struct GammaManifest {
    kind: GammaKind,
    norm: Normalization,
    layer_shapes: Vec<Vec<usize>>,
    dtype: String,
}

#[derive(Debug, Clone)]
pub struct LayerWeights {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl LayerWeights {
    fn from_tensor(t: &Tensor) -> Self {
        LayerWeights {
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        }
    }

    fn tensor(&self) -> Tensor {
        Tensor::from_vec(&self.shape, self.data.clone()).expect("stored shape matches data")
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FitMetrics {
    pub mse: f64,
    pub mae: f64,
}

pub const MLP_HIDDEN_LAYERS: usize = 4;
pub const MLP_HIDDEN_WIDTH: usize = 3;
pub const MLP_EPOCHS: usize = 200;
pub const MLP_LR: f64 = 0.0008;
const MLP_BATCH: usize = 128;

/// Fits the impact function on congestion (triple, delay) pairs. A seeded
/// shuffle puts `split` of the data in the training part; metrics come from
/// the held-out remainder, in normalized target units.
pub fn fit_gamma(
    data: &[(ImpactTriple, f64)],
    kind: GammaKind,
    split: f64,
    seed: u64,
) -> Result<(GammaModel, FitMetrics, Vec<f64>), GammaError> {
    if data.len() < 100 {
        return Err(GammaError::TooFewRecords {
            need: 100,
            got: data.len(),
        });
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = init::stream(seed, "gamma/split");
    order.shuffle(&mut rng);
    let n_train = ((data.len() as f64) * split).round() as usize;
    let (train_ix, test_ix) = order.split_at(n_train.clamp(1, data.len() - 1));

    let mut severities: Vec<u8> = train_ix.iter().map(|&i| data[i].0.severity).collect();
    severities.sort_unstable();
    severities.dedup();
    let min_max = |f: &dyn Fn(usize) -> f64| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in train_ix {
            lo = lo.min(f(i));
            hi = hi.max(f(i));
        }
        (lo, hi)
    };
    let norm = Normalization {
        severities,
        duration: min_max(&|i| data[i].0.duration_min),
        distance: min_max(&|i| data[i].0.distance_miles),
        target: min_max(&|i| data[i].1),
    };

    let encode_rows = |ixs: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs = ixs
            .iter()
            .map(|&i| norm.encode(&data[i].0).0)
            .collect::<Vec<_>>();
        let ys = ixs
            .iter()
            .map(|&i| Normalization::scale(data[i].1, norm.target))
            .collect::<Vec<_>>();
        (xs, ys)
    };
    let (train_x, train_y) = encode_rows(train_ix);
    let (test_x, test_y) = encode_rows(test_ix);

    let (layers, curve) = match kind {
        GammaKind::Linear => (vec![ols(&train_x, &train_y)?], Vec::new()),
        GammaKind::Mlp => train_mlp(&train_x, &train_y, seed)?,
    };
    let model = GammaModel { kind, norm, layers };

    let preds = model.forward(&test_x);
    let mse = test_y
        .iter()
        .zip(preds.iter())
        .map(|(y, p)| (y - p) * (y - p))
        .sum::<f64>()
        / test_y.len() as f64;
    let mae = test_y
        .iter()
        .zip(preds.iter())
        .map(|(y, p)| (y - p).abs())
        .sum::<f64>()
        / test_y.len() as f64;
    Ok((model, FitMetrics { mse, mae }, curve))
}

/// Ordinary least squares via normal equations with partial-pivot
/// elimination. The one-hot severity block supplies per-category intercepts,
/// so no explicit constant column is added.
fn ols(xs: &[Vec<f64>], ys: &[f64]) -> Result<LayerWeights, GammaError> {
    let d = xs[0].len();
    let mut xtx = vec![vec![0.0; d]; d];
    let mut xty = vec![0.0; d];
    for (x, &y) in xs.iter().zip(ys.iter()) {
        for i in 0..d {
            xty[i] += x[i] * y;
            for j in 0..d {
                xtx[i][j] += x[i] * x[j];
            }
        }
    }
    let beta = solve(&mut xtx, &mut xty)?;
    Ok(LayerWeights {
        shape: vec![d],
        data: beta,
    })
}

fn solve(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>, GammaError> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-10 {
            return Err(GammaError::DegenerateDesign(format!(
                "pivot {:.3e} at column {col}",
                a[pivot][col]
            )));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Trains the fixed 4×3+1 tanh network with Adam (lr 0.0008) for 200 epochs
/// of minibatch MSE. Returns the weights and the per-epoch full-train loss
/// curve.
fn train_mlp(
    xs: &[Vec<f64>],
    ys: &[f64],
    seed: u64,
) -> Result<(Vec<LayerWeights>, Vec<f64>), GammaError> {
    let in_dim = xs[0].len();
    let dims: Vec<usize> = std::iter::once(in_dim)
        .chain(std::iter::repeat_n(MLP_HIDDEN_WIDTH, MLP_HIDDEN_LAYERS))
        .chain(std::iter::once(1))
        .collect();
    let mut rng = init::stream(seed, "gamma/mlp-init");
    let mut weights: Vec<Tensor> = Vec::new();
    for pair in dims.windows(2) {
        weights.push(init::xavier_uniform(pair[0], pair[1], &mut rng));
        weights.push(Tensor::zeros(&[pair[1]]));
    }
    let shapes: Vec<&[usize]> = weights.iter().map(|t| t.shape()).collect();
    let mut adam = AdamState::new(AdamConfig::with_lr(MLP_LR), &shapes);

    let forward = |weights: &[Tensor], x: &Tensor| -> (Tensor, Vec<Tensor>, Vec<Tensor>) {
        // returns output, per-layer inputs, per-layer activations
        let mut inputs = Vec::new();
        let mut acts = Vec::new();
        let mut cur = x.clone();
        let n_layers = weights.len() / 2;
        for l in 0..n_layers {
            inputs.push(cur.clone());
            let (z, _) = dense(&cur, &weights[2 * l], &weights[2 * l + 1]);
            let out = if l + 1 < n_layers { z.map(f64::tanh) } else { z };
            acts.push(out.clone());
            cur = out;
        }
        (cur, inputs, acts)
    };

    let n = xs.len();
    let flat: Vec<f64> = xs.iter().flatten().copied().collect();
    let all_x = Tensor::from_vec(&[n, in_dim], flat).expect("design matrix");
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = init::stream(seed, "gamma/mlp-shuffle");
    let mut curve = Vec::with_capacity(MLP_EPOCHS);

    for epoch in 0..MLP_EPOCHS {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(MLP_BATCH) {
            let bx: Vec<f64> = chunk.iter().flat_map(|&i| xs[i].iter().copied()).collect();
            let by: Vec<f64> = chunk.iter().map(|&i| ys[i]).collect();
            let x = Tensor::from_vec(&[chunk.len(), in_dim], bx).expect("batch");
            let (pred, inputs, acts) = forward(&weights, &x);
            // MSE gradient: 2(pred − y)/B
            let inv_b = 1.0 / chunk.len() as f64;
            let mut grad = pred.clone();
            for (g, &y) in grad.data_mut().iter_mut().zip(by.iter()) {
                *g = 2.0 * (*g - y) * inv_b;
            }
            let n_layers = weights.len() / 2;
            let mut grads: Vec<Tensor> = vec![Tensor::zeros(&[0]); weights.len()];
            let mut upstream = grad;
            for l in (0..n_layers).rev() {
                if l + 1 < n_layers {
                    // backprop through tanh on this layer's activation
                    upstream = upstream.zip(&acts[l], |g, a| g * (1.0 - a * a));
                }
                let cache = impactcast_nn::DenseCache {
                    x: inputs[l].clone(),
                };
                let (gx, gw, gb) = dense_backward(&upstream, &weights[2 * l], &cache);
                grads[2 * l] = gw;
                grads[2 * l + 1] = gb;
                upstream = gx;
            }
            let grad_refs: Vec<&Tensor> = grads.iter().collect();
            let mut param_refs: Vec<&mut Tensor> = weights.iter_mut().collect();
            adam_step(&mut param_refs, &grad_refs, &mut adam);
        }
        let (pred, _, _) = forward(&weights, &all_x);
        let loss = pred
            .data()
            .iter()
            .zip(ys.iter())
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>()
            / n as f64;
        if !loss.is_finite() {
            return Err(GammaError::NonFiniteLoss(epoch));
        }
        curve.push(loss);
    }
    Ok((weights.iter().map(LayerWeights::from_tensor).collect(), curve))
}

impl GammaModel {
    fn forward(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        match self.kind {
            GammaKind::Linear => {
                let beta = &self.layers[0].data;
                xs.iter()
                    .map(|x| x.iter().zip(beta.iter()).map(|(a, b)| a * b).sum())
                    .collect()
            }
            GammaKind::Mlp => {
                let weights: Vec<Tensor> = self.layers.iter().map(|l| l.tensor()).collect();
                let n_layers = weights.len() / 2;
                let in_dim = xs[0].len();
                let flat: Vec<f64> = xs.iter().flatten().copied().collect();
                let mut cur = Tensor::from_vec(&[xs.len(), in_dim], flat).expect("batch");
                for l in 0..n_layers {
                    let (z, _) = dense(&cur, &weights[2 * l], &weights[2 * l + 1]);
                    cur = if l + 1 < n_layers { z.map(f64::tanh) } else { z };
                }
                cur.into_data()
            }
        }
    }

    fn bin_path(path: &Path) -> std::path::PathBuf {
        path.with_extension("bin")
    }

    /// Writes the JSON manifest at `path` and the little-endian f64 weights
    /// next to it with a .bin extension.
    pub fn save(&self, path: &Path) -> Result<(), GammaError> {
        let manifest = GammaManifest {
            kind: self.kind,
            norm: self.norm.clone(),
            layer_shapes: self.layers.iter().map(|l| l.shape.clone()).collect(),
            dtype: "f64le".to_string(),
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| GammaError::ModelFile(e.to_string()))?;
        std::fs::write(path, json)?;
        let mut bytes = Vec::new();
        for layer in &self.layers {
            for v in &layer.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(Self::bin_path(path), bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, GammaError> {
        let json = std::fs::read_to_string(path)?;
        let manifest: GammaManifest =
            serde_json::from_str(&json).map_err(|e| GammaError::ModelFile(e.to_string()))?;
        if manifest.dtype != "f64le" {
            return Err(GammaError::ModelFile(format!(
                "unsupported dtype {}",
                manifest.dtype
            )));
        }
        let bytes = std::fs::read(Self::bin_path(path))?;
        let expected: usize = manifest
            .layer_shapes
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum();
        if bytes.len() != expected * 8 {
            return Err(GammaError::ModelFile(format!(
                "weight file holds {} bytes, manifest expects {}",
                bytes.len(),
                expected * 8
            )));
        }
        let mut layers = Vec::with_capacity(manifest.layer_shapes.len());
        let mut off = 0usize;
        for shape in manifest.layer_shapes {
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut arr = [0u8; 8];
                arr.copy_from_slice(&bytes[off..off + 8]);
                data.push(f64::from_le_bytes(arr));
                off += 8;
            }
            layers.push(LayerWeights { shape, data });
        }
        Ok(GammaModel {
            kind: manifest.kind,
            norm: manifest.norm,
            layers,
        })
    }
}

/// Applies a fitted model to accident triples. Unseen severity categories map
/// to an all-zero severity one-hot with a warning.
pub fn apply_gamma(model: &GammaModel, triples: &[ImpactTriple]) -> Vec<f64> {
    let mut unseen = 0usize;
    let xs: Vec<Vec<f64>> = triples
        .iter()
        .map(|t| {
            let (x, known) = model.norm.encode(t);
            if !known {
                unseen += 1;
            }
            x
        })
        .collect();
    if unseen > 0 {
        logging::warn(&format!(
            "{unseen} accidents carry severity categories unseen at fit time; encoded as neutral"
        ));
    }
    if xs.is_empty() {
        return Vec::new();
    }
    model.forward(&xs)
}

/// Median split: gamma at or below the median is medium (1), above is
/// high (2).
pub fn classify_gamma(gammas: &[f64], median: f64) -> Vec<u8> {
    gammas.iter().map(|&g| if g <= median { 1 } else { 2 }).collect()
}

/// Median of the training-period accident gammas, frozen for test data.
pub fn gamma_median(gammas: &[f64]) -> f64 {
    stats::median(gammas)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth_linear(n: usize, seed: u64) -> Vec<(ImpactTriple, f64)> {
        // delay = 0.3·duration + 0.5·distance + c(severity), noise-free
        let c = [2.0, 4.0, 7.0, 11.0];
        let mut rng = init::stream(seed, "gamma/test-data");
        (0..n)
            .map(|_| {
                let severity = 1 + (rand::Rng::random_range(&mut rng, 0..4u8));
                let duration = rand::Rng::random_range(&mut rng, 10.0..120.0);
                let distance = rand::Rng::random_range(&mut rng, 0.0..5.0);
                let delay =
                    0.3 * duration + 0.5 * distance + c[(severity - 1) as usize];
                (
                    ImpactTriple {
                        severity,
                        duration_min: duration,
                        distance_miles: distance,
                    },
                    delay,
                )
            })
            .collect()
    }

    #[test]
    fn linear_fit_recovers_a_linear_law_exactly() {
        let data = synth_linear(2000, 7);
        let (_, metrics, _) = fit_gamma(&data, GammaKind::Linear, 0.85, 11).unwrap();
        assert!(metrics.mse < 1e-10, "mse {}", metrics.mse);
    }

    #[test]
    fn linear_fit_matches_a_cholesky_oracle() {
        // independent least-squares route: Cholesky on the normal equations
        let data = synth_linear(400, 13);
        let (model, _, _) = fit_gamma(&data, GammaKind::Linear, 0.85, 11).unwrap();
        // rebuild the exact training design the fit used
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = init::stream(11, "gamma/split");
        order.shuffle(&mut rng);
        let n_train = ((data.len() as f64) * 0.85).round() as usize;
        let train_ix = &order[..n_train];
        let xs: Vec<Vec<f64>> = train_ix.iter().map(|&i| model.norm.encode(&data[i].0).0).collect();
        let ys: Vec<f64> = train_ix
            .iter()
            .map(|&i| Normalization::scale(data[i].1, model.norm.target))
            .collect();
        let d = xs[0].len();
        let mut ata = vec![vec![0.0; d]; d];
        let mut aty = vec![0.0; d];
        for (x, &y) in xs.iter().zip(ys.iter()) {
            for i in 0..d {
                aty[i] += x[i] * y;
                for j in 0..d {
                    ata[i][j] += x[i] * x[j];
                }
            }
        }
        // Cholesky factorization A = LLᵀ
        let mut l = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..=i {
                let mut s = ata[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    l[i][j] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        // solve L z = aty, then Lᵀ beta = z
        let mut z = vec![0.0; d];
        for i in 0..d {
            let mut s = aty[i];
            for k in 0..i {
                s -= l[i][k] * z[k];
            }
            z[i] = s / l[i][i];
        }
        let mut beta = vec![0.0; d];
        for i in (0..d).rev() {
            let mut s = z[i];
            for k in (i + 1)..d {
                s -= l[k][i] * beta[k];
            }
            beta[i] = s / l[i][i];
        }
        for (a, b) in model.layers[0].data.iter().zip(beta.iter()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn classify_follows_the_median_rule() {
        let eps = 1e-9;
        let median = 0.5;
        assert_eq!(classify_gamma(&[median - eps], median), vec![1]);
        assert_eq!(classify_gamma(&[median + eps], median), vec![2]);
        assert_eq!(classify_gamma(&[median], median), vec![1], "ties are medium");
    }

    #[test]
    fn classification_is_monotone() {
        let gammas = [0.1, 0.4, 0.5, 0.6, 0.9];
        let classes = classify_gamma(&gammas, 0.5);
        for w in classes.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn identical_triples_get_identical_gamma() {
        let data = synth_linear(300, 3);
        let (model, _, _) = fit_gamma(&data, GammaKind::Linear, 0.85, 5).unwrap();
        let t = ImpactTriple {
            severity: 2,
            duration_min: 30.0,
            distance_miles: 1.0,
        };
        let out = apply_gamma(&model, &[t.clone(), t.clone()]);
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn batch_and_single_application_agree() {
        let data = synth_linear(300, 3);
        let (model, _, _) = fit_gamma(&data, GammaKind::Mlp, 0.85, 5).unwrap();
        let triples: Vec<ImpactTriple> = data[..10].iter().map(|(t, _)| t.clone()).collect();
        let batch = apply_gamma(&model, &triples);
        for (i, t) in triples.iter().enumerate() {
            let single = apply_gamma(&model, std::slice::from_ref(t));
            assert!((batch[i] - single[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_duration_zero_distance_reads_the_severity_coefficient() {
        // a full factorial over {0,60} duration × {0,2} distance × severities,
        // repeated, so the training range definitely includes zero
        let c = [2.0, 4.0];
        let mut data = Vec::new();
        for _ in 0..20 {
            for &severity in &[1u8, 2] {
                for &duration in &[0.0, 60.0] {
                    for &distance in &[0.0, 2.0] {
                        let delay = 0.3 * duration + 0.5 * distance + c[(severity - 1) as usize];
                        data.push((
                            ImpactTriple { severity, duration_min: duration, distance_miles: distance },
                            delay,
                        ));
                    }
                }
            }
        }
        let (model, _, _) = fit_gamma(&data, GammaKind::Linear, 0.85, 5).unwrap();
        let g = apply_gamma(
            &model,
            &[ImpactTriple { severity: 1, duration_min: 0.0, distance_miles: 0.0 }],
        )[0];
        let k = model.norm.severities.iter().position(|&s| s == 1).unwrap();
        assert!((g - model.layers[0].data[k]).abs() < 1e-9);
    }

    #[test]
    fn unseen_severity_maps_to_neutral_encoding() {
        let data = synth_linear(300, 19);
        let (model, _, _) = fit_gamma(&data, GammaKind::Linear, 0.85, 5).unwrap();
        let g = apply_gamma(
            &model,
            &[ImpactTriple { severity: 9, duration_min: 0.0, distance_miles: 0.0 }],
        );
        assert!(g[0].is_finite());
    }
}
