//! Training loops and the end-to-end cascade pipeline over a tensor pack.

use super::model1::{apply_grads as apply_grads1, Model1};
use super::model2::{apply_grads as apply_grads2, Model2};
use super::{rus, CascadeError, Model2Source, RusReport, TrainConfig};
use crate::grid::{build_windows, TensorPack, WindowSample};
use crate::logging;
use impactcast_nn::{init, softmax, weighted_xent_batch, AdamConfig, AdamState, NnError, Tensor};
use rand::seq::SliceRandom;
use std::collections::BTreeMap;

const PREDICT_BATCH: usize = 256;

/// Trains the embedding+LSTM+dense model. The head width and class weights
/// are parameters so the 3-class single-step baseline can reuse the exact
/// same structure.
pub fn train_model1(
    samples: &[WindowSample],
    cfg: &TrainConfig,
    n_zones: usize,
    f: usize,
    n_classes: usize,
    class_weights: &[f64],
    target_of: impl Fn(&WindowSample) -> usize,
    epochs: usize,
    tag: &str,
) -> Result<(Model1, Vec<f64>), CascadeError> {
    if samples.is_empty() {
        return Err(CascadeError::EmptyPool(format!("{tag} training")));
    }
    let mut rng_init = init::stream(cfg.seed, &format!("{tag}/init"));
    let mut model = Model1::new(cfg.model1.clone(), n_zones, f, n_classes, &mut rng_init);
    let (mean, std) = super::common::feature_stats(samples, f);
    model.set_normalization(mean, std);
    let shapes = model.param_shapes();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), &shape_refs);
    let mut shuffle_rng = init::stream(cfg.seed, &format!("{tag}/shuffle"));
    let mut dropout_rng = init::stream(cfg.seed, &format!("{tag}/dropout"));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_id, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&WindowSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|s| target_of(s)).collect();
            let (logits, cache) =
                model.forward_train(&batch, cfg.w, cfg.dropout_keep, &mut dropout_rng)?;
            let (loss, grad) = match weighted_xent_batch(&logits, &labels, class_weights) {
                Ok(v) => v,
                Err(NnError::NonFinite(_)) => {
                    return Err(CascadeError::NonFiniteLoss {
                        model: tag.to_string(),
                        epoch,
                        batch: batch_id,
                    })
                }
                Err(e) => return Err(e.into()),
            };
            if !loss.is_finite() {
                return Err(CascadeError::NonFiniteLoss {
                    model: tag.to_string(),
                    epoch,
                    batch: batch_id,
                });
            }
            let grads = model.backward(&grad, &cache);
            apply_grads1(&mut model, &grads, &mut adam);
            epoch_loss += loss;
            batches += 1;
        }
        losses.push(epoch_loss / batches as f64);
    }
    Ok((model, losses))
}

/// Trains the convolutional model on gamma-class targets.
pub fn train_model2(
    samples: &[WindowSample],
    cfg: &TrainConfig,
    f: usize,
    epochs: usize,
    tag: &str,
) -> Result<(Model2, Vec<f64>), CascadeError> {
    if samples.is_empty() {
        return Err(CascadeError::EmptyPool(format!("{tag} training")));
    }
    let mut rng_init = init::stream(cfg.seed, &format!("{tag}/init"));
    let mut model = Model2::new(cfg.model2.clone(), cfg.w, f, 3, &mut rng_init)?;
    let (mean, std) = super::common::feature_stats(samples, f);
    model.set_normalization(mean, std);
    let shapes = model.param_shapes();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), &shape_refs);
    let mut shuffle_rng = init::stream(cfg.seed, &format!("{tag}/shuffle"));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_id, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&WindowSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|s| s.target_gamma as usize).collect();
            let (logits, cache) = model.forward(&batch, true)?;
            let cache = cache.expect("cache requested");
            let (loss, grad) = match weighted_xent_batch(&logits, &labels, &cfg.class_weights_model2)
            {
                Ok(v) => v,
                Err(NnError::NonFinite(_)) => {
                    return Err(CascadeError::NonFiniteLoss {
                        model: tag.to_string(),
                        epoch,
                        batch: batch_id,
                    })
                }
                Err(e) => return Err(e.into()),
            };
            if !loss.is_finite() {
                return Err(CascadeError::NonFiniteLoss {
                    model: tag.to_string(),
                    epoch,
                    batch: batch_id,
                });
            }
            let grads = model.backward(&grad, &cache)?;
            apply_grads2(&mut model, &grads, &mut adam);
            epoch_loss += loss;
            batches += 1;
        }
        losses.push(epoch_loss / batches as f64);
    }
    Ok((model, losses))
}

/// Argmax class per row.
fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let p = softmax(logits);
    (0..p.rows())
        .map(|r| {
            p.row(r)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap()
        })
        .collect()
}

/// First-stage argmax labels over a sample list.
pub fn predict_model1(
    model: &Model1,
    samples: &[WindowSample],
    w: usize,
) -> Result<Vec<usize>, CascadeError> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(PREDICT_BATCH) {
        let batch: Vec<&WindowSample> = chunk.iter().collect();
        let logits = model.forward_infer(&batch, w)?;
        out.extend(argmax_rows(&logits));
    }
    Ok(out)
}

/// Cascade inference: a first-stage non-accident verdict short-circuits to
/// class 0; otherwise the second stage's 3-way argmax decides (which may
/// itself say 0).
pub fn predict_cascade(
    model1: &Model1,
    model2: &Model2,
    samples: &[WindowSample],
    w: usize,
) -> Result<Vec<u8>, CascadeError> {
    let stage1 = predict_model1(model1, samples, w)?;
    let mut out = vec![0u8; samples.len()];
    let positive: Vec<usize> = (0..samples.len()).filter(|&i| stage1[i] == 1).collect();
    for chunk in positive.chunks(PREDICT_BATCH) {
        let batch: Vec<&WindowSample> = chunk.iter().map(|&i| &samples[i]).collect();
        let (logits, _) = model2.forward(&batch, false)?;
        for (&i, cls) in chunk.iter().zip(argmax_rows(&logits)) {
            out[i] = cls as u8;
        }
    }
    Ok(out)
}

/// One-sample cascade prediction.
pub fn predict_single(
    model1: &Model1,
    model2: &Model2,
    sample: &WindowSample,
    w: usize,
) -> Result<u8, CascadeError> {
    Ok(predict_cascade(model1, model2, std::slice::from_ref(sample), w)?[0])
}

#[derive(Debug)]
pub struct CascadeOutcome {
    pub model1: Model1,
    pub model2: Model2,
    pub baseline_lstm: Option<Model1>,
    pub baseline_cnn: Option<Model2>,
    pub loss1: Vec<f64>,
    pub loss2: Vec<f64>,
    pub rus_report: RusReport,
    pub m2_pool_size: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// (zone_index, target_interval) per test sample
    pub test_meta: Vec<(usize, usize)>,
    pub test_truth: Vec<u8>,
    /// per-model predicted classes over the same test samples
    pub predictions: BTreeMap<String, Vec<u8>>,
}

/// The full train/evaluate pipeline over one pack: window extraction,
/// temporal split, under-sampling, both stages, optional baselines, and
/// test-set predictions on the natural distribution.
pub fn run_cascade(
    pack: &TensorPack,
    cfg: &TrainConfig,
    keep_mask: Option<&[bool]>,
) -> Result<CascadeOutcome, CascadeError> {
    let series = pack.all_series(keep_mask);
    let windows = build_windows(&series, cfg.w)?;
    let boundary = pack.manifest.train_boundary_interval;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for s in windows {
        if s.target_interval < boundary {
            train.push(s);
        } else {
            test.push(s);
        }
    }
    if train.is_empty() {
        return Err(CascadeError::EmptyPool("temporal train split".into()));
    }
    if test.is_empty() {
        return Err(CascadeError::EmptyPool("temporal test split".into()));
    }
    let n_train = train.len();
    let n_test = test.len();
    let f = pack.f();
    let n_zones = pack.n_zones();

    let (pool, rus_report) = rus(&train, cfg.rus_ratio, cfg.seed)?;
    logging::info(&format!(
        "training pool: {} accident + {} non-accident of {} train windows",
        rus_report.accident_kept, rus_report.non_accident_kept, n_train
    ));

    let (model1, loss1) = train_model1(
        &pool,
        cfg,
        n_zones,
        f,
        2,
        &cfg.class_weights_model1,
        |s| s.target_label as usize,
        cfg.epochs_model1,
        "model1",
    )?;

    let m2_pool: Vec<WindowSample> = match cfg.model2_source {
        Model2Source::Model1Flagged => {
            let flags = predict_model1(&model1, &pool, cfg.w)?;
            pool.iter()
                .zip(flags.iter())
                .filter(|(_, &flag)| flag == 1)
                .map(|(s, _)| s.clone())
                .collect()
        }
        Model2Source::GroundTruth => pool
            .iter()
            .filter(|s| s.target_label == 1)
            .cloned()
            .collect(),
    };
    let m2_pool_size = m2_pool.len();
    for class in [1u8, 2] {
        if !m2_pool.iter().any(|s| s.target_gamma == class) {
            return Err(CascadeError::MissingGammaClass(class));
        }
    }
    if !m2_pool.iter().any(|s| s.target_gamma == 0) {
        logging::warn("model-2 pool carries no class-0 rows (first stage made no false positives)");
    }

    let (model2, loss2) = train_model2(&m2_pool, cfg, f, cfg.epochs_model2, "model2")?;

    let mut predictions = BTreeMap::new();
    predictions.insert(
        "cascade".to_string(),
        predict_cascade(&model1, &model2, &test, cfg.w)?,
    );

    let (baseline_lstm, baseline_cnn) = if cfg.with_baselines {
        let (bl, _) = train_model1(
            &pool,
            cfg,
            n_zones,
            f,
            3,
            &cfg.class_weights_model2,
            |s| s.target_gamma as usize,
            cfg.epochs_model1,
            "baseline-lstm",
        )?;
        let mut preds = Vec::with_capacity(test.len());
        for chunk in test.chunks(PREDICT_BATCH) {
            let batch: Vec<&WindowSample> = chunk.iter().collect();
            let logits = bl.forward_infer(&batch, cfg.w)?;
            preds.extend(argmax_rows(&logits).into_iter().map(|c| c as u8));
        }
        predictions.insert("lstm-baseline".to_string(), preds);

        let (bc, _) = train_model2(&pool, cfg, f, cfg.epochs_model2, "baseline-cnn")?;
        let mut preds = Vec::with_capacity(test.len());
        for chunk in test.chunks(PREDICT_BATCH) {
            let batch: Vec<&WindowSample> = chunk.iter().collect();
            let (logits, _) = bc.forward(&batch, false)?;
            preds.extend(argmax_rows(&logits).into_iter().map(|c| c as u8));
        }
        predictions.insert("cnn-baseline".to_string(), preds);
        (Some(bl), Some(bc))
    } else {
        (None, None)
    };

    Ok(CascadeOutcome {
        model1,
        model2,
        baseline_lstm,
        baseline_cnn,
        loss1,
        loss2,
        rus_report,
        m2_pool_size,
        n_train,
        n_test,
        test_meta: test.iter().map(|s| (s.zone_index, s.target_interval)).collect(),
        test_truth: test.iter().map(|s| s.target_gamma).collect(),
        predictions,
    })
}
