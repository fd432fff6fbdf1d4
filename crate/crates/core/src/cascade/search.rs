//! Grid search over the two architecture spaces. The first phase walks the
//! LSTM-stage space with the default convolutional stage; the second walks
//! the convolutional space with the winner of the first. Selection is
//! lexicographic: recall on class 2, then recall on class 1, then precision
//! on class 0, mirroring which failures cost the most.

use super::train::run_cascade;
use super::{CascadeError, ConvLayerSpec, Model1Arch, Model2Arch, TrainConfig};
use crate::eval::confusion_counts;
use crate::grid::TensorPack;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub lstm_layers: Vec<usize>,
    pub lstm_neurons: Vec<usize>,
    pub fc_layers: Vec<usize>,
    pub fc_sizes: Vec<usize>,
    pub conv_layers: Vec<usize>,
    pub conv_filters: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            lstm_layers: vec![1, 2, 3],
            lstm_neurons: vec![12, 18, 24],
            fc_layers: vec![1, 2],
            fc_sizes: vec![12, 25, 50],
            conv_layers: vec![1, 2, 3],
            conv_filters: vec![8, 16, 32, 64, 128],
        }
    }
}

impl SearchSpace {
    pub fn load(path: &std::path::Path) -> Result<Self, CascadeError> {
        let json = std::fs::read_to_string(path)?;
        serde_json::from_str(&json).map_err(|e| CascadeError::ModelFile(e.to_string()))
    }

    /// All first-stage candidates, in deterministic nested order.
    pub fn model1_candidates(&self) -> Vec<Model1Arch> {
        let mut out = Vec::new();
        for &layers in &self.lstm_layers {
            for &neurons in &self.lstm_neurons {
                for &fc_layers in &self.fc_layers {
                    for &fc_size in &self.fc_sizes {
                        out.push(Model1Arch {
                            embedding_dim: 20,
                            lstm_sizes: vec![neurons; layers],
                            fc_sizes: vec![fc_size; fc_layers],
                        });
                    }
                }
            }
        }
        out
    }

    /// All second-stage candidates. Pool widths follow the fixed (3, 3, 1)
    /// schedule truncated to the layer count so the default 35-wide input
    /// stays divisible.
    pub fn model2_candidates(&self) -> Vec<Model2Arch> {
        let pools = [3usize, 3, 1];
        let mut out = Vec::new();
        for &layers in &self.conv_layers {
            for &filters in &self.conv_filters {
                out.push(Model2Arch {
                    conv: (0..layers)
                        .map(|l| ConvLayerSpec {
                            filters,
                            kernel_w: 3,
                            pool_w: pools[l.min(2)],
                        })
                        .collect(),
                    fc_sizes: Model2Arch::default().fc_sizes,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchRow {
    pub phase: String,
    pub config: String,
    pub recall_class2: f64,
    pub recall_class1: f64,
    pub precision_class0: f64,
}

#[derive(Debug)]
pub struct SearchResult {
    pub rows: Vec<SearchRow>,
    pub best_model1: Model1Arch,
    pub best_model2: Model2Arch,
    pub evaluated: usize,
}

/// Metric triple on a validation pack; undefined metrics count as −1 so any
/// defined value beats them.
fn score(pack: &TensorPack, cfg: &TrainConfig) -> Result<(f64, f64, f64), CascadeError> {
    let outcome = run_cascade(pack, cfg, None)?;
    let truth = &outcome.test_truth;
    let pred = &outcome.predictions["cascade"];
    let m = confusion_counts(truth, pred);
    let metric = |opt: Option<f64>| opt.unwrap_or(-1.0);
    let recall = |class: usize| {
        let row: u64 = (0..3).map(|j| m[class][j]).sum();
        if row == 0 {
            None
        } else {
            Some(m[class][class] as f64 / row as f64)
        }
    };
    let precision = |class: usize| {
        let col: u64 = (0..3).map(|i| m[i][class]).sum();
        if col == 0 {
            None
        } else {
            Some(m[class][class] as f64 / col as f64)
        }
    };
    Ok((metric(recall(2)), metric(recall(1)), metric(precision(0))))
}

fn better(a: (f64, f64, f64), b: (f64, f64, f64)) -> bool {
    a.partial_cmp(&b) == Some(std::cmp::Ordering::Greater)
}

/// Exhaustive (budget-capped) search. `pack` must carry the validation split
/// as its test period; each candidate gets a seed stream derived from the
/// base seed and its phase-local index.
pub fn grid_search(
    pack: &TensorPack,
    base_cfg: &TrainConfig,
    space: &SearchSpace,
    budget: usize,
) -> Result<SearchResult, CascadeError> {
    if budget == 0 {
        return Err(CascadeError::ZeroBudget);
    }
    let mut rows = Vec::new();
    let mut evaluated = 0usize;

    let mut best_model1 = base_cfg.model1.clone();
    let mut best1: Option<(f64, f64, f64)> = None;
    for (ix, candidate) in space.model1_candidates().into_iter().enumerate() {
        if evaluated >= budget {
            break;
        }
        let mut cfg = base_cfg.clone();
        cfg.model1 = candidate.clone();
        cfg.with_baselines = false;
        cfg.seed = base_cfg.seed.wrapping_add(ix as u64);
        let s = score(pack, &cfg)?;
        evaluated += 1;
        rows.push(SearchRow {
            phase: "model1".into(),
            config: format!(
                "lstm={:?} fc={:?}",
                candidate.lstm_sizes, candidate.fc_sizes
            ),
            recall_class2: s.0,
            recall_class1: s.1,
            precision_class0: s.2,
        });
        if best1.is_none_or(|b| better(s, b)) {
            best1 = Some(s);
            best_model1 = candidate;
        }
    }

    let mut best_model2 = base_cfg.model2.clone();
    let mut best2: Option<(f64, f64, f64)> = None;
    for (ix, candidate) in space.model2_candidates().into_iter().enumerate() {
        if evaluated >= budget {
            break;
        }
        let mut cfg = base_cfg.clone();
        cfg.model1 = best_model1.clone();
        cfg.model2 = candidate.clone();
        cfg.with_baselines = false;
        cfg.seed = base_cfg.seed.wrapping_add(10_000 + ix as u64);
        let s = score(pack, &cfg)?;
        evaluated += 1;
        rows.push(SearchRow {
            phase: "model2".into(),
            config: format!(
                "conv={:?}",
                candidate.conv.iter().map(|c| c.filters).collect::<Vec<_>>()
            ),
            recall_class2: s.0,
            recall_class1: s.1,
            precision_class0: s.2,
        });
        if best2.is_none_or(|b| better(s, b)) {
            best2 = Some(s);
            best_model2 = candidate;
        }
    }

    // rank within each phase, best first
    rows.sort_by(|a, b| {
        a.phase.cmp(&b.phase).then(
            (b.recall_class2, b.recall_class1, b.precision_class0)
                .partial_cmp(&(a.recall_class2, a.recall_class1, a.precision_class0))
                .unwrap(),
        )
    });
    Ok(SearchResult {
        rows,
        best_model1,
        best_model2,
        evaluated,
    })
}
