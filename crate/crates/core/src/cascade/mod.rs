//! The two-stage predictor: a binary LSTM detector gates a 3-class CNN
//! impact classifier. Includes random under-sampling, the single-step
//! baselines, and grid search over the architecture space.

pub mod common;
pub mod model1;
pub mod model2;
pub mod search;
pub mod train;

pub use model1::Model1;
pub use model2::Model2;
pub use search::{grid_search, SearchRow, SearchSpace};
pub use train::{predict_cascade, predict_single, run_cascade, CascadeOutcome};

use crate::grid::WindowSample;
use impactcast_nn::init;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("non-finite loss in {model} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        model: String,
        epoch: usize,
        batch: usize,
    },
    #[error("gamma class {0} absent from the model-2 training pool")]
    MissingGammaClass(u8),
    #[error("training pool is empty after {0}")]
    EmptyPool(String),
    #[error("both classes must be present for under-sampling; positives = {positives}, negatives = {negatives}")]
    OneClassOnly { positives: usize, negatives: usize },
    #[error("sample feature dim {sample} does not match model feature dim {model}")]
    DimMismatch { sample: usize, model: usize },
    #[error("model file error: {0}")]
    ModelFile(String),
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Nn(#[from] impactcast_nn::NnError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// First-stage architecture: zone embedding plus a stacked LSTM and dense
/// layers.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Model1Arch {
    pub embedding_dim: usize,
    pub lstm_sizes: Vec<usize>,
    pub fc_sizes: Vec<usize>,
}

impl Default for Model1Arch {
    fn default() -> Self {
        Model1Arch {
            embedding_dim: 20,
            lstm_sizes: vec![12, 24],
            fc_sizes: vec![25, 25],
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ConvLayerSpec {
    pub filters: usize,
    pub kernel_w: usize,
    pub pool_w: usize,
}

/// Second-stage architecture: convolution layers over the 1 × w × F window
/// image, then dense layers into the 3-way head.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Model2Arch {
    pub conv: Vec<ConvLayerSpec>,
    pub fc_sizes: Vec<usize>,
}

impl Default for Model2Arch {
    fn default() -> Self {
        // kernels are 1×3 along the feature axis; the pool widths (3, 3, 1)
        // walk the default 35-column width down to 1: 35→33→11→9→3→1
        Model2Arch {
            conv: vec![
                ConvLayerSpec { filters: 32, kernel_w: 3, pool_w: 3 },
                ConvLayerSpec { filters: 64, kernel_w: 3, pool_w: 3 },
                ConvLayerSpec { filters: 64, kernel_w: 3, pool_w: 1 },
            ],
            fc_sizes: vec![50, 25],
        }
    }
}

/// Where model 2's training pool comes from: rows the trained first stage
/// flags positive (the default), or ground-truth accident rows.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Model2Source {
    Model1Flagged,
    GroundTruth,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub w: usize,
    pub epochs_model1: usize,
    pub epochs_model2: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lr: f64,
    pub rus_ratio: f64,
    pub class_weights_model1: [f64; 2],
    pub class_weights_model2: [f64; 3],
    pub dropout_keep: f64,
    pub model2_source: Model2Source,
    pub with_baselines: bool,
    pub model1: Model1Arch,
    pub model2: Model2Arch,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            w: 4,
            epochs_model1: 150,
            epochs_model2: 25,
            batch_size: 128,
            seed: 42,
            lr: 1e-3,
            rus_ratio: 1.3,
            class_weights_model1: [1.0, 3.0],
            class_weights_model2: [0.7, 4.5, 3.5],
            dropout_keep: 0.8,
            model2_source: Model2Source::Model1Flagged,
            with_baselines: false,
            model1: Model1Arch::default(),
            model2: Model2Arch::default(),
        }
    }
}

impl TrainConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, CascadeError> {
        let json = std::fs::read_to_string(path)?;
        serde_json::from_str(&json).map_err(|e| CascadeError::ModelFile(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RusReport {
    pub accident_kept: usize,
    pub non_accident_before: usize,
    pub non_accident_kept: usize,
    /// true when the majority class was already at or under the target
    pub under_target: bool,
}

/// Random under-sampling of the non-accident majority. Keeps every accident
/// sample and uniformly subsamples non-accident samples without replacement
/// down to ceil(n_accident × ratio). Output preserves the input order.
pub fn rus(
    samples: &[WindowSample],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<WindowSample>, RusReport), CascadeError> {
    let positives = samples.iter().filter(|s| s.target_label == 1).count();
    let negatives = samples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(CascadeError::OneClassOnly {
            positives,
            negatives,
        });
    }
    // the epsilon keeps an exactly-integer product from ceiling upward off a
    // float representation artifact
    let target = ((positives as f64) * ratio - 1e-9).ceil() as usize;
    if negatives <= target {
        crate::logging::warn(&format!(
            "non-accident count {negatives} already at or below the {target} target; keeping all"
        ));
        return Ok((
            samples.to_vec(),
            RusReport {
                accident_kept: positives,
                non_accident_before: negatives,
                non_accident_kept: negatives,
                under_target: true,
            },
        ));
    }
    let neg_ix: Vec<usize> = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.target_label == 0)
        .map(|(i, _)| i)
        .collect();
    let mut rng = init::stream(seed, "cascade/rus");
    let mut chosen = rand::seq::index::sample(&mut rng, neg_ix.len(), target).into_vec();
    chosen.sort_unstable();
    let mut keep = vec![false; samples.len()];
    for s in samples.iter().enumerate().filter(|(_, s)| s.target_label == 1) {
        keep[s.0] = true;
    }
    for c in chosen {
        keep[neg_ix[c]] = true;
    }
    let kept: Vec<WindowSample> = samples
        .iter()
        .zip(keep.iter())
        .filter(|(_, &k)| k)
        .map(|(s, _)| s.clone())
        .collect();
    Ok((
        kept,
        RusReport {
            accident_kept: positives,
            non_accident_before: negatives,
            non_accident_kept: target,
            under_target: false,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(label: u8, tag: usize) -> WindowSample {
        WindowSample {
            zone_index: tag,
            target_interval: tag,
            sequence: vec![0.0; 4],
            target_label: label,
            target_gamma: label,
        }
    }

    #[test]
    fn rus_keeps_all_accidents_and_hits_the_ceiling() {
        let mut samples = Vec::new();
        for i in 0..130 {
            samples.push(sample(1, i));
        }
        for i in 0..1000 {
            samples.push(sample(0, 1000 + i));
        }
        let (kept, report) = rus(&samples, 1.3, 7).unwrap();
        assert_eq!(report.accident_kept, 130);
        assert_eq!(report.non_accident_kept, 169); // ceil(130 × 1.3)
        assert_eq!(kept.iter().filter(|s| s.target_label == 1).count(), 130);
        assert_eq!(kept.len(), 299);
    }

    #[test]
    fn rus_exact_integer_product_does_not_overshoot() {
        let mut samples = Vec::new();
        for i in 0..10 {
            samples.push(sample(1, i));
        }
        for i in 0..50 {
            samples.push(sample(0, 100 + i));
        }
        // 10 × 1.3 = 13 exactly
        let (_, report) = rus(&samples, 1.3, 7).unwrap();
        assert_eq!(report.non_accident_kept, 13);
    }

    #[test]
    fn rus_already_balanced_input_is_unchanged() {
        let mut samples = Vec::new();
        for i in 0..10 {
            samples.push(sample(1, i));
            samples.push(sample(0, 100 + i));
        }
        let (kept, report) = rus(&samples, 1.3, 7).unwrap();
        assert!(report.under_target);
        assert_eq!(kept.len(), samples.len());
    }

    #[test]
    fn rus_same_seed_same_selection() {
        let mut samples = Vec::new();
        for i in 0..20 {
            samples.push(sample(1, i));
        }
        for i in 0..500 {
            samples.push(sample(0, 1000 + i));
        }
        let ids = |v: &[WindowSample]| v.iter().map(|s| s.zone_index).collect::<Vec<_>>();
        let (a, _) = rus(&samples, 1.3, 99).unwrap();
        let (b, _) = rus(&samples, 1.3, 99).unwrap();
        let (c, _) = rus(&samples, 1.3, 100).unwrap();
        assert_eq!(ids(&a), ids(&b));
        assert_ne!(ids(&a), ids(&c));
    }

    #[test]
    fn rus_preserves_every_accident_sample() {
        let mut samples = Vec::new();
        for i in 0..37 {
            samples.push(sample(1, i));
        }
        for i in 0..400 {
            samples.push(sample(0, 1000 + i));
        }
        let (kept, _) = rus(&samples, 1.3, 3).unwrap();
        let kept_acc: std::collections::BTreeSet<usize> = kept
            .iter()
            .filter(|s| s.target_label == 1)
            .map(|s| s.zone_index)
            .collect();
        assert_eq!(kept_acc.len(), 37);
        for i in 0..37 {
            assert!(kept_acc.contains(&i));
        }
    }
}
