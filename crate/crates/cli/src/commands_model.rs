//! Model-side commands: train, predict, eval, gridsearch, ablate, sweep-w,
//! cluster.

use anyhow::{bail, Context, Result};
use impactcast_core::cascade::{
    grid_search, run_cascade, Model1, Model2, SearchSpace, TrainConfig,
};
use impactcast_core::eval::{
    ablate as run_ablate, comparison_rows, confusion, metrics_for, window_sweep,
    write_metrics_csv, MetricsRow,
};
use impactcast_core::grid::{build_windows, TensorPack, WindowSample};
use impactcast_core::kmeans::cluster_embeddings;
use impactcast_core::manifest::RunManifest;
use std::path::{Path, PathBuf};

fn load_pack(path: &Path) -> Result<TensorPack> {
    TensorPack::load(path).with_context(|| format!("loading tensor pack from {}", path.display()))
}

fn load_config(config: &Option<PathBuf>, seed: u64) -> Result<TrainConfig> {
    let mut cfg = match config {
        Some(path) => TrainConfig::load(path)
            .with_context(|| format!("loading train config {}", path.display()))?,
        None => TrainConfig::default(),
    };
    cfg.seed = seed;
    Ok(cfg)
}

/// The pack's natural test split under the given window length.
fn test_windows(pack: &TensorPack, w: usize) -> Result<Vec<WindowSample>> {
    let series = pack.all_series(None);
    let windows = build_windows(&series, w)?;
    let boundary = pack.manifest.train_boundary_interval;
    Ok(windows
        .into_iter()
        .filter(|s| s.target_interval >= boundary)
        .collect())
}

/// Clear diagnostic when a model was trained for a different feature width.
fn check_dims(pack: &TensorPack, model1: &Model1) -> Result<()> {
    if model1.input_dim != pack.f() {
        bail!(
            "dimension mismatch: the pack encodes {} features per interval but the model was \
             trained with {}; rebuild the pack or retrain",
            pack.f(),
            model1.input_dim
        );
    }
    if model1.n_zones != pack.n_zones() {
        bail!(
            "dimension mismatch: the pack holds {} zones but the model embeds {}",
            pack.n_zones(),
            model1.n_zones
        );
    }
    Ok(())
}

pub fn train(
    pack_dir: PathBuf,
    config: Option<PathBuf>,
    model_out: PathBuf,
    w: Option<usize>,
    with_baselines: bool,
    seed: u64,
) -> Result<()> {
    let pack = load_pack(&pack_dir)?;
    let mut cfg = load_config(&config, seed)?;
    if let Some(w) = w {
        cfg.w = w;
    }
    cfg.with_baselines = with_baselines;
    let outcome = run_cascade(&pack, &cfg, None).context("training the cascade")?;
    std::fs::create_dir_all(&model_out)?;
    outcome.model1.save(&model_out, "model1")?;
    outcome.model2.save(&model_out, "model2")?;
    if let Some(bl) = &outcome.baseline_lstm {
        bl.save(&model_out, "baseline-lstm")?;
    }
    if let Some(bc) = &outcome.baseline_cnn {
        bc.save(&model_out, "baseline-cnn")?;
    }
    let cfg_json = serde_json::to_string_pretty(&cfg)?;
    std::fs::write(model_out.join("train_config.json"), cfg_json)?;
    // loss curves for inspection
    let mut wtr = csv::Writer::from_path(model_out.join("loss_curves.csv"))?;
    wtr.write_record(["model", "epoch", "loss"])?;
    for (i, l) in outcome.loss1.iter().enumerate() {
        wtr.write_record(["model1".into(), i.to_string(), format!("{l:.9}")])?;
    }
    for (i, l) in outcome.loss2.iter().enumerate() {
        wtr.write_record(["model2".into(), i.to_string(), format!("{l:.9}")])?;
    }
    wtr.flush()?;

    let mut run = RunManifest::new("train", cfg.seed);
    run.param("config", &cfg);
    run.param("rus", &outcome.rus_report);
    run.param("m2_pool", outcome.m2_pool_size);
    run.param("n_train", outcome.n_train);
    run.param("n_test", outcome.n_test);
    run.digest_input("pack_features", &pack_dir.join("features.bin"))?;
    run.digest_input("pack_labels", &pack_dir.join("labels.bin"))?;
    run.write(&model_out.join("run_manifest.json"))?;
    println!(
        "train: pool {}+{} -> model1 final loss {:.4}; m2 pool {} -> model2 final loss {:.4}",
        outcome.rus_report.accident_kept,
        outcome.rus_report.non_accident_kept,
        outcome.loss1.last().copied().unwrap_or(f64::NAN),
        outcome.m2_pool_size,
        outcome.loss2.last().copied().unwrap_or(f64::NAN),
    );
    Ok(())
}

pub fn predict(pack_dir: PathBuf, models: PathBuf, out: PathBuf) -> Result<()> {
    let pack = load_pack(&pack_dir)?;
    let cfg = TrainConfig::load(&models.join("train_config.json"))
        .context("reading train_config.json from the model dir")?;
    let model1 = Model1::load(&models, "model1")?;
    let model2 = Model2::load(&models, "model2")?;
    check_dims(&pack, &model1)?;
    let test = test_windows(&pack, cfg.w)?;
    let preds = impactcast_core::cascade::predict_cascade(&model1, &model2, &test, cfg.w)?;
    let mut w = csv::Writer::from_path(&out)?;
    w.write_record(["zone_index", "target_interval", "true_class", "predicted_class"])?;
    for (s, p) in test.iter().zip(preds.iter()) {
        w.write_record([
            s.zone_index.to_string(),
            s.target_interval.to_string(),
            s.target_gamma.to_string(),
            p.to_string(),
        ])?;
    }
    w.flush()?;
    println!("predict: {} test samples -> {}", test.len(), out.display());
    Ok(())
}

pub fn eval(pack_dir: PathBuf, models: PathBuf, out: PathBuf) -> Result<()> {
    let pack = load_pack(&pack_dir)?;
    let cfg = TrainConfig::load(&models.join("train_config.json"))
        .context("reading train_config.json from the model dir")?;
    let model1 = Model1::load(&models, "model1")?;
    let model2 = Model2::load(&models, "model2")?;
    check_dims(&pack, &model1)?;
    let test = test_windows(&pack, cfg.w)?;
    let truth: Vec<u8> = test.iter().map(|s| s.target_gamma).collect();

    let mut predictions = std::collections::BTreeMap::new();
    predictions.insert(
        "cascade".to_string(),
        impactcast_core::cascade::predict_cascade(&model1, &model2, &test, cfg.w)?,
    );
    if models.join("baseline-lstm.meta.json").exists() {
        let bl = Model1::load(&models, "baseline-lstm")?;
        let mut preds = Vec::with_capacity(test.len());
        for chunk in test.chunks(256) {
            let batch: Vec<&WindowSample> = chunk.iter().collect();
            let logits = bl.forward_infer(&batch, cfg.w)?;
            let probs = impactcast_nn::softmax(&logits);
            for r in 0..probs.rows() {
                let arg = probs
                    .row(r)
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i as u8)
                    .unwrap();
                preds.push(arg);
            }
        }
        predictions.insert("lstm-baseline".to_string(), preds);
    }
    if models.join("baseline-cnn.meta.json").exists() {
        let bc = Model2::load(&models, "baseline-cnn")?;
        let mut preds = Vec::with_capacity(test.len());
        for chunk in test.chunks(256) {
            let batch: Vec<&WindowSample> = chunk.iter().collect();
            let (logits, _) = bc.forward(&batch, false)?;
            let probs = impactcast_nn::softmax(&logits);
            for r in 0..probs.rows() {
                let arg = probs
                    .row(r)
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i as u8)
                    .unwrap();
                preds.push(arg);
            }
        }
        predictions.insert("cnn-baseline".to_string(), preds);
    }

    let rows = comparison_rows(&truth, &predictions)?;
    write_metrics_csv(&out, &rows)?;
    for r in rows.iter().filter(|r| r.model != "reference-full-scale") {
        println!(
            "{} class {}: precision {} recall {} (n_true {})",
            r.model,
            r.class,
            r.precision.map(|v| format!("{v:.4}")).unwrap_or("NA".into()),
            r.recall.map(|v| format!("{v:.4}")).unwrap_or("NA".into()),
            r.n_true
        );
    }
    println!("eval: {} samples -> {}", truth.len(), out.display());
    Ok(())
}

pub fn gridsearch(
    pack_dir: PathBuf,
    space: Option<PathBuf>,
    config: Option<PathBuf>,
    budget: usize,
    val_fraction: f64,
    out: PathBuf,
    seed: u64,
) -> Result<()> {
    let pack = load_pack(&pack_dir)?;
    let cfg = load_config(&config, seed)?;
    let space = match &space {
        Some(path) => SearchSpace::load(path).context("loading search space")?,
        None => SearchSpace::default(),
    };
    // validate inside the train period: the last val_fraction of the train
    // intervals becomes the held-out range
    let boundary = pack.manifest.train_boundary_interval;
    let val_start = boundary - ((boundary as f64 * val_fraction).round() as usize).clamp(1, boundary - 1);
    let val_pack = pack.truncated(boundary, val_start);
    let result = grid_search(&val_pack, &cfg, &space, budget).context("grid search")?;
    let mut w = csv::Writer::from_path(&out)?;
    w.write_record(["phase", "config", "recall_class2", "recall_class1", "precision_class0"])?;
    for row in &result.rows {
        w.write_record([
            row.phase.clone(),
            row.config.clone(),
            format!("{:.6}", row.recall_class2),
            format!("{:.6}", row.recall_class1),
            format!("{:.6}", row.precision_class0),
        ])?;
    }
    w.flush()?;
    let best = serde_json::json!({
        "model1": result.best_model1,
        "model2": result.best_model2,
    });
    std::fs::write(
        out.with_extension("best.json"),
        serde_json::to_string_pretty(&best)?,
    )?;
    println!(
        "gridsearch: evaluated {} configs -> {} (best saved alongside)",
        result.evaluated,
        out.display()
    );
    Ok(())
}

pub fn ablate(
    pack_dir: PathBuf,
    categories: String,
    config: Option<PathBuf>,
    out: PathBuf,
    seed: u64,
) -> Result<()> {
    let pack = load_pack(&pack_dir)?;
    let cfg = load_config(&config, seed)?;
    let selected: Vec<&str> = categories.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    let rows = run_ablate(&pack, &selected, &cfg).context("ablation run")?;
    write_metrics_csv(&out, &rows)?;
    print_rows(&rows);
    Ok(())
}

pub fn sweep_w(
    pack_dir: PathBuf,
    w: String,
    config: Option<PathBuf>,
    out: PathBuf,
    seed: u64,
) -> Result<()> {
    let pack = load_pack(&pack_dir)?;
    let cfg = load_config(&config, seed)?;
    let ws: Vec<usize> = w
        .split(',')
        .map(|s| s.trim().parse::<usize>().context("window lengths must be integers"))
        .collect::<Result<_>>()?;
    if ws.contains(&0) {
        bail!("window lengths must be at least 1");
    }
    let sweep = window_sweep(&pack, &ws, &cfg).context("window sweep")?;
    let rows: Vec<MetricsRow> = sweep.into_iter().flat_map(|(_, rows)| rows).collect();
    write_metrics_csv(&out, &rows)?;
    print_rows(&rows);
    Ok(())
}

pub fn cluster(models: PathBuf, pack_dir: PathBuf, k: usize, out: PathBuf, seed: u64) -> Result<()> {
    let pack = load_pack(&pack_dir)?;
    let model1 = Model1::load(&models, "model1")?;
    check_dims(&pack, &model1)?;
    let result = cluster_embeddings(&model1.embedding, k, seed).context("k-means clustering")?;
    let mut w = csv::Writer::from_path(&out)?;
    w.write_record(["zone_index", "lat", "lon", "cluster"])?;
    for zone in &pack.manifest.zones {
        w.write_record([
            zone.zone_index.to_string(),
            format!("{:.6}", zone.center_lat),
            format!("{:.6}", zone.center_lon),
            result.assignment[zone.zone_index].to_string(),
        ])?;
    }
    w.flush()?;
    println!(
        "cluster: {} zones into {k} clusters (inertia {:.4}, {} iterations) -> {}",
        pack.n_zones(),
        result.inertia,
        result.iterations,
        out.display()
    );
    Ok(())
}

fn print_rows(rows: &[MetricsRow]) {
    for r in rows {
        println!(
            "{} class {}: precision {} recall {}",
            r.model,
            r.class,
            r.precision.map(|v| format!("{v:.4}")).unwrap_or("NA".into()),
            r.recall.map(|v| format!("{v:.4}")).unwrap_or("NA".into()),
        );
    }
}

// referenced by the acceptance suite for direct metric checks
#[allow(dead_code)]
pub fn metrics_of(truth: &[u8], pred: &[u8]) -> Result<Vec<MetricsRow>> {
    let m = confusion(truth, pred)?;
    Ok(metrics_for("cascade", &m))
}
