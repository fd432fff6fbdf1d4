//! Data-side commands: synth, ingest, label-gamma, fit-duration, build-pack.

use anyhow::{bail, Context, Result};
use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use impactcast_core::durfit;
use impactcast_core::gamma::GammaKind;
use impactcast_core::ingest::{
    parse_dataset, write_accidents, write_congestion, write_poi, write_weather, DatasetKind,
    DatasetRecords, Reject, StationMap,
};
use impactcast_core::manifest::RunManifest;
use impactcast_core::pipeline::{self, GammaLabelRow, PackParams};
use impactcast_core::synth::{generate, SynthConfig};
use std::path::{Path, PathBuf};

pub fn synth(config: Option<PathBuf>, out: PathBuf, seed: u64) -> Result<()> {
    let mut cfg = match &config {
        Some(path) => SynthConfig::load(path).context("loading synth config")?,
        None => SynthConfig::default(),
    };
    cfg.seed = seed;
    let manifest = generate(&cfg, &out).context("generating synthetic data")?;
    let mut run = RunManifest::new("synth", seed);
    run.param("config", &cfg);
    run.param("n_accidents", manifest.accidents.len());
    run.param("n_congestion", manifest.congestion.len());
    run.write(&out.join("run_manifest.json"))?;
    println!(
        "synth: {} accidents, {} congestion events, {} intervals -> {}",
        manifest.accidents.len(),
        manifest.congestion.len(),
        manifest.n_intervals,
        out.display()
    );
    Ok(())
}

fn load_stations(stations: &Option<PathBuf>) -> Result<StationMap> {
    Ok(match stations {
        Some(path) => StationMap::from_csv(path).context("loading station map")?,
        None => StationMap::default_la(),
    })
}

pub(crate) fn read_accidents(path: &Path) -> Result<(Vec<impactcast_core::ingest::AccidentRecord>, Vec<Reject>)> {
    let out = parse_dataset(path, DatasetKind::Accidents)?;
    match out.records {
        DatasetRecords::Accidents(v) => Ok((v, out.rejects)),
        _ => unreachable!(),
    }
}

pub(crate) fn read_congestion(path: &Path) -> Result<(Vec<impactcast_core::ingest::CongestionRecord>, Vec<Reject>)> {
    let out = parse_dataset(path, DatasetKind::Congestion)?;
    match out.records {
        DatasetRecords::Congestion(v) => Ok((v, out.rejects)),
        _ => unreachable!(),
    }
}

pub(crate) fn read_weather(path: &Path) -> Result<(Vec<impactcast_core::ingest::WeatherRecord>, Vec<Reject>)> {
    let out = parse_dataset(path, DatasetKind::Weather)?;
    match out.records {
        DatasetRecords::Weather(v) => Ok((v, out.rejects)),
        _ => unreachable!(),
    }
}

pub(crate) fn read_poi(path: &Path) -> Result<(Vec<impactcast_core::ingest::PoiRecord>, Vec<Reject>)> {
    let out = parse_dataset(path, DatasetKind::Poi)?;
    match out.records {
        DatasetRecords::Poi(v) => Ok((v, out.rejects)),
        _ => unreachable!(),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn ingest(
    accidents: PathBuf,
    congestion: PathBuf,
    weather: PathBuf,
    poi: PathBuf,
    stations: Option<PathBuf>,
    out: PathBuf,
    rejects_out: Option<PathBuf>,
    seed: u64,
) -> Result<()> {
    std::fs::create_dir_all(&out)?;
    let station_map = load_stations(&stations)?;
    let (acc, racc) = read_accidents(&accidents)?;
    let (cong, rcong) = read_congestion(&congestion)?;
    let (wx, rwx) = read_weather(&weather)?;
    let (pois, rpoi) = read_poi(&poi)?;
    let total_rejects = racc.len() + rcong.len() + rwx.len() + rpoi.len();

    let rejects_path = rejects_out.unwrap_or_else(|| out.join("rejects.csv"));
    impactcast_core::ingest::write_rejects(
        &rejects_path,
        &[
            (DatasetKind::Accidents, racc),
            (DatasetKind::Congestion, rcong),
            (DatasetKind::Weather, rwx),
            (DatasetKind::Poi, rpoi),
        ],
    )?;

    let (acc, cong, wx, report) =
        pipeline::clean_datasets(acc, cong, wx, &station_map).context("cleaning datasets")?;
    write_accidents(&out.join("accidents.csv"), &acc)?;
    write_congestion(&out.join("congestion.csv"), &cong)?;
    write_weather(&out.join("weather.csv"), &wx)?;
    write_poi(&out.join("poi.csv"), &pois)?;
    station_map.to_csv(&out.join("stations.csv"))?;

    let mut run = RunManifest::new("ingest", seed);
    run.digest_input("accidents", &accidents)?;
    run.digest_input("congestion", &congestion)?;
    run.digest_input("weather", &weather)?;
    run.digest_input("poi", &poi)?;
    run.param("clean_report", &report);
    run.param("reject_rows", total_rejects);
    run.write(&out.join("run_manifest.json"))?;
    println!(
        "ingest: {} accidents ({} deduped), {} congestion ({} delays extracted), {} weather, {} poi; {total_rejects} rejects -> {}",
        acc.len(),
        report.accidents_deduped,
        cong.len(),
        report.delay_extracted,
        wx.len(),
        pois.len(),
        rejects_path.display()
    );
    Ok(())
}

pub(crate) fn parse_day(s: &str) -> Result<DateTime<Utc>> {
    let d = NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .with_context(|| format!("unparseable date '{s}', expected YYYY-MM-DD"))?;
    Ok(Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).unwrap()))
}

pub fn label_gamma(
    congestion: PathBuf,
    accidents: PathBuf,
    model_out: PathBuf,
    labels_out: PathBuf,
    kind: String,
    train_end: Option<String>,
    seed: u64,
) -> Result<()> {
    let kind = match kind.as_str() {
        "linear" => GammaKind::Linear,
        "mlp" => GammaKind::Mlp,
        other => bail!("unknown gamma model kind '{other}' (expected linear or mlp)"),
    };
    let boundary = train_end.as_deref().map(parse_day).transpose()?;
    let (cong, _) = read_congestion(&congestion)?;
    let (acc, _) = read_accidents(&accidents)?;
    let (model, labels, outcome) =
        pipeline::label_gamma(&cong, &acc, kind, boundary, seed).context("fitting gamma")?;
    model.save(&model_out)?;
    write_labels(&labels_out, &labels)?;

    let mut run = RunManifest::new("label-gamma", seed);
    run.digest_input("congestion", &congestion)?;
    run.digest_input("accidents", &accidents)?;
    run.param("kind", format!("{kind:?}"));
    run.param("median", outcome.median);
    run.param("held_out_mse", outcome.metrics.mse);
    run.param("held_out_mae", outcome.metrics.mae);
    run.param("n_congestion_used", outcome.n_congestion_used);
    run.param("n_train_accidents", outcome.n_train_accidents);
    run.write(&manifest_path(&labels_out))?;
    println!(
        "label-gamma: fitted on {} congestion rows, held-out mse {:.6} mae {:.6}, median {:.6}",
        outcome.n_congestion_used, outcome.metrics.mse, outcome.metrics.mae, outcome.median
    );
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}.manifest.json"))
}

fn write_labels(path: &Path, labels: &[GammaLabelRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "duration_min", "gamma", "gamma_class"])?;
    for l in labels {
        w.write_record([
            l.id.clone(),
            format!("{}", l.duration_min),
            format!("{:.9}", l.gamma),
            l.gamma_class.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_labels(path: &Path) -> Result<Vec<GammaLabelRow>> {
    let mut rdr = csv::Reader::from_path(path)
        .with_context(|| format!("opening labels file {}", path.display()))?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<(String, f64, f64, u8)>() {
        let (id, duration_min, gamma, gamma_class) = rec?;
        out.push(GammaLabelRow {
            id,
            duration_min,
            gamma,
            gamma_class,
        });
    }
    Ok(out)
}

pub fn fit_duration(durations_from: PathBuf, out: PathBuf, histogram_out: Option<PathBuf>) -> Result<()> {
    let labels = read_labels(&durations_from)?;
    let durations: Vec<f64> = labels.iter().map(|l| l.duration_min).filter(|d| *d > 0.0).collect();
    let report = durfit::fit_and_rank(&durations).context("fitting duration distributions")?;
    let mut w = csv::Writer::from_path(&out)?;
    w.write_record(["candidate", "params", "sse", "converged"])?;
    for c in &report.candidates {
        let params = c
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v:.6}"))
            .collect::<Vec<_>>()
            .join(" ");
        w.write_record([
            c.name.clone(),
            params,
            format!("{:.9}", c.sse),
            c.converged.to_string(),
        ])?;
    }
    w.flush()?;
    if let Some(hist) = histogram_out {
        let mut w = csv::Writer::from_path(&hist)?;
        w.write_record(["bin_low", "bin_high", "frequency"])?;
        for i in 0..report.binning.k {
            w.write_record([
                format!("{}", report.binning.edges[i]),
                format!("{}", report.binning.edges[i + 1]),
                format!("{}", report.binning.frequencies[i]),
            ])?;
        }
        w.flush()?;
    }
    println!(
        "fit-duration: {} durations, K = {}, best = {}",
        durations.len(),
        report.binning.k,
        report.candidates[0].name
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn build_pack(
    accidents: PathBuf,
    congestion: PathBuf,
    weather: PathBuf,
    poi: PathBuf,
    stations: Option<PathBuf>,
    gamma_labels: PathBuf,
    train_end: String,
    out: PathBuf,
    alpha: usize,
    edge_km: f64,
    origin_lat: Option<f64>,
    origin_lon: Option<f64>,
    epoch: Option<String>,
    end: Option<String>,
    condition_vocab: Option<String>,
    seed: u64,
) -> Result<()> {
    let station_map = load_stations(&stations)?;
    let (acc, _) = read_accidents(&accidents)?;
    let (cong, _) = read_congestion(&congestion)?;
    let (wx, _) = read_weather(&weather)?;
    let (pois, _) = read_poi(&poi)?;
    let labels = read_labels(&gamma_labels)?;
    let boundary = parse_day(&train_end)?;

    let mut params = PackParams {
        edge_km: Some(edge_km),
        alpha: Some(alpha),
        seed,
        condition_vocab: condition_vocab
            .map(|s| s.split(',').map(|c| c.trim().to_string()).collect()),
        ..PackParams::default()
    };
    if let (Some(lat), Some(lon)) = (origin_lat, origin_lon) {
        params.origin = Some((lat, lon));
    }
    if let Some(e) = epoch {
        params.epoch = Some(
            DateTime::parse_from_rfc3339(&e)
                .with_context(|| format!("unparseable epoch '{e}'"))?
                .with_timezone(&Utc),
        );
    }
    if let Some(e) = end {
        params.end = Some(
            DateTime::parse_from_rfc3339(&e)
                .with_context(|| format!("unparseable end '{e}'"))?
                .with_timezone(&Utc),
        );
    }
    params.input_digests = [
        ("accidents", &accidents),
        ("congestion", &congestion),
        ("weather", &weather),
        ("poi", &poi),
        ("gamma_labels", &gamma_labels),
    ]
    .into_iter()
    .map(|(name, path)| {
        impactcast_core::manifest::fnv64_file(path).map(|d| (name.to_string(), d))
    })
    .collect::<std::io::Result<_>>()?;

    let pack = pipeline::build_pack(
        &acc,
        &cong,
        &wx,
        &pois,
        &station_map,
        &labels,
        boundary,
        &params,
    )
    .context("building the tensor pack")?;
    pack.save(&out)?;
    let mut run = RunManifest::new("build-pack", seed);
    run.param("alpha", alpha);
    run.param("train_end", &train_end);
    run.param("zones", pack.n_zones());
    run.param("n_intervals", pack.n_intervals());
    run.param("feature_dim", pack.f());
    for (k, v) in &params.input_digests {
        run.input_digests.insert(k.clone(), v.clone());
    }
    run.write(&out.join("run_manifest.json"))?;
    println!(
        "build-pack: {} zones × {} intervals × {} features -> {}",
        pack.n_zones(),
        pack.n_intervals(),
        pack.f(),
        out.display()
    );
    Ok(())
}
