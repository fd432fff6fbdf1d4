//! Confusion-matrix metrics, the model comparison table, feature-category
//! ablation, and the window-size sweep.
//!
//! Precision for class i reads the column sum (everything predicted as i);
//! recall reads the row sum (everything truly i). A zero denominator yields
//! an undefined marker, reported as "NA", never 0 or 1.

use crate::cascade::{run_cascade, CascadeError, TrainConfig};
use crate::grid::TensorPack;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("truth and prediction lists differ in length: {truth} vs {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("class {0} outside 0..=2")]
    BadClass(u8),
    #[error("no ablatable category selected")]
    EmptyMask,
    #[error("unknown feature category '{0}'")]
    UnknownCategory(String),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// 3×3 counts, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

/// Raw tally without the wrapper, for callers that only need counts.
pub fn confusion_counts(truth: &[u8], pred: &[u8]) -> [[u64; 3]; 3] {
    let mut m = [[0u64; 3]; 3];
    for (&t, &p) in truth.iter().zip(pred.iter()) {
        m[t as usize][p as usize] += 1;
    }
    m
}

pub fn confusion(truth: &[u8], pred: &[u8]) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    if let Some(&bad) = truth.iter().chain(pred.iter()).find(|&&c| c > 2) {
        return Err(EvalError::BadClass(bad));
    }
    Ok(ConfusionMatrix {
        counts: confusion_counts(truth, pred),
    })
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..3).map(|i| self.counts[i][j]).sum()
    }
}

/// (precision, recall) for one class; None marks an undefined metric.
pub fn precision_recall(m: &ConfusionMatrix, class: usize) -> (Option<f64>, Option<f64>) {
    let col = m.col_sum(class);
    let row = m.row_sum(class);
    let hit = m.counts[class][class] as f64;
    let precision = if col == 0 { None } else { Some(hit / col as f64) };
    let recall = if row == 0 { None } else { Some(hit / row as f64) };
    (precision, recall)
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub model: String,
    pub class: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub n_true: u64,
    pub n_pred: u64,
}

pub fn metrics_for(model: &str, m: &ConfusionMatrix) -> Vec<MetricsRow> {
    (0..3)
        .map(|class| {
            let (precision, recall) = precision_recall(m, class);
            MetricsRow {
                model: model.to_string(),
                class,
                precision,
                recall,
                n_true: m.row_sum(class),
                n_pred: m.col_sum(class),
            }
        })
        .collect()
}

/// Full-scale reference results for the comparison table: per class
/// (precision, recall) as published for the cascade configuration at
/// production data scale. Context rows only; desk-scale runs are not
/// expected to reproduce them.
pub const FULL_SCALE_REFERENCE: [(usize, f64, f64); 3] =
    [(0, 0.96, 0.31), (1, 0.10, 0.41), (2, 0.04, 0.50)];

pub fn reference_rows() -> Vec<MetricsRow> {
    FULL_SCALE_REFERENCE
        .iter()
        .map(|&(class, precision, recall)| MetricsRow {
            model: "reference-full-scale".to_string(),
            class,
            precision: Some(precision),
            recall: Some(recall),
            n_true: 0,
            n_pred: 0,
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "NA".to_string(),
    }
}

/// Metrics CSV: model, class, precision, recall, n_true, n_pred.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "class", "precision", "recall", "n_true", "n_pred"])?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.class.to_string(),
            fmt_opt(r.precision),
            fmt_opt(r.recall),
            r.n_true.to_string(),
            r.n_pred.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The three feature categories the ablation study can isolate. Temporal and
/// congestion columns are run plumbing and stay active in every variant, so
/// selecting all three categories reproduces the unablated run exactly.
pub const ABLATABLE_CATEGORIES: [&str; 3] = ["weather", "spatial", "accident"];

/// Column keep-mask for an ablation selection.
pub fn ablation_mask(pack: &TensorPack, selected: &[&str]) -> Result<Vec<bool>, EvalError> {
    if selected.is_empty() {
        return Err(EvalError::EmptyMask);
    }
    for s in selected {
        if !ABLATABLE_CATEGORIES.contains(s) {
            return Err(EvalError::UnknownCategory(s.to_string()));
        }
    }
    let mut keep = vec![true; pack.f()];
    for category in ABLATABLE_CATEGORIES {
        if selected.contains(&category) {
            continue;
        }
        let cols = pack
            .manifest
            .category_masks
            .get(category)
            .ok_or_else(|| EvalError::UnknownCategory(category.to_string()))?;
        for &c in cols {
            keep[c] = false;
        }
    }
    Ok(keep)
}

/// Retrains the cascade with only the selected categories' columns active and
/// reports the per-class metrics.
pub fn ablate(
    pack: &TensorPack,
    selected: &[&str],
    cfg: &TrainConfig,
) -> Result<Vec<MetricsRow>, EvalError> {
    let keep = ablation_mask(pack, selected)?;
    let outcome = run_cascade(pack, cfg, Some(&keep))?;
    let m = confusion(&outcome.test_truth, &outcome.predictions["cascade"])?;
    let tag = format!("cascade[{}]", selected.join("+"));
    Ok(metrics_for(&tag, &m))
}

/// One full train/eval cycle per window length, all from the same base seed.
pub fn window_sweep(
    pack: &TensorPack,
    ws: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<(usize, Vec<MetricsRow>)>, EvalError> {
    let mut out = Vec::new();
    for &w in ws {
        let mut wcfg = cfg.clone();
        wcfg.w = w;
        let outcome = run_cascade(pack, &wcfg, None)?;
        let m = confusion(&outcome.test_truth, &outcome.predictions["cascade"])?;
        out.push((w, metrics_for(&format!("cascade[w={w}]"), &m)));
    }
    Ok(out)
}

/// Builds comparison rows from a cascade outcome: every trained model over
/// the shared test truth, plus the full-scale reference context rows.
pub fn comparison_rows(
    truth: &[u8],
    predictions: &BTreeMap<String, Vec<u8>>,
) -> Result<Vec<MetricsRow>, EvalError> {
    let mut rows = Vec::new();
    for (model, preds) in predictions {
        let m = confusion(truth, preds)?;
        rows.extend(metrics_for(model, &m));
    }
    rows.extend(reference_rows());
    Ok(rows)
}
