//! End-to-end wiring of the batch stages: cleaning, gamma labeling, and
//! tensor-pack construction. The CLI commands are thin shells over these.

use crate::gamma::{
    apply_gamma, classify_gamma, fit_gamma, gamma_median, FitMetrics, GammaKind, GammaModel,
    ImpactTriple,
};
use crate::grid::{
    assemble_all, cell_of, filter_sparse_zones, interval_of, CellIndex, FeatureSchema, GridConfig,
    GridError, PackManifest, PreparedData, SparseFilterReport, TensorPack, ZoneAccidentStats,
    ZoneInfo,
};
use crate::ingest::{
    clip_outliers, dedup_accidents, drop_redundant, extract_delay, impute_missing,
    AccidentRecord, Column, CongestionRecord, FeatureTable, IngestError, PoiRecord, StationMap,
    WeatherRecord,
};
use crate::logging;
use chrono::{DateTime, Duration, Timelike, Utc};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Gamma(#[from] crate::gamma::GammaError),
    #[error("{0}")]
    Invalid(String),
}

/// Cleaning summary for the run manifest.
#[derive(Debug, Clone, Serialize, Default)]
pub struct CleanReport {
    pub accidents_in: usize,
    pub accidents_deduped: usize,
    pub weather_imputed: BTreeMap<String, usize>,
    pub clipped: BTreeMap<String, usize>,
    pub delay_extracted: usize,
    pub delay_missing: usize,
    pub dropped_features: Vec<(String, String)>,
}

/// Cleans all four datasets in place: dedups accidents, imputes weather,
/// populates congestion delay from descriptions, clips numeric outliers,
/// and reports redundant weather features.
pub fn clean_datasets(
    accidents: Vec<AccidentRecord>,
    mut congestion: Vec<CongestionRecord>,
    mut weather: Vec<WeatherRecord>,
    stations: &StationMap,
) -> Result<(Vec<AccidentRecord>, Vec<CongestionRecord>, Vec<WeatherRecord>, CleanReport), PipelineError>
{
    let mut report = CleanReport {
        accidents_in: accidents.len(),
        ..CleanReport::default()
    };
    let mut accidents = dedup_accidents(accidents);
    report.accidents_deduped = report.accidents_in - accidents.len();

    let impute = impute_missing(&mut weather, 2, stations)?;
    report.weather_imputed = impute.filled;

    // delay extraction, first mention wins; rows without a mention stay absent
    for c in &mut congestion {
        if c.delay_min.is_none() {
            match extract_delay(&c.description) {
                Ok(d) => {
                    c.delay_min = Some(d);
                    report.delay_extracted += 1;
                }
                Err(_) => report.delay_missing += 1,
            }
        }
    }

    // three-sigma clipping over every numeric column of every dataset
    let mut clip_count = |name: &str, vals: &mut Vec<f64>| {
        let clipped = clip_outliers(vals);
        let changed = vals
            .iter()
            .zip(clipped.iter())
            .filter(|(a, b)| a != b)
            .count();
        if changed > 0 {
            report.clipped.insert(name.to_string(), changed);
        }
        *vals = clipped;
    };
    macro_rules! clip_field {
        ($records:expr, $field:ident, $name:expr) => {{
            let mut vals: Vec<f64> = $records.iter().map(|r| r.$field).collect();
            if vals.len() >= 2 {
                clip_count($name, &mut vals);
                for (r, v) in $records.iter_mut().zip(vals) {
                    r.$field = v;
                }
            }
        }};
    }
    macro_rules! clip_opt_field {
        ($records:expr, $field:ident, $name:expr) => {{
            let mut vals: Vec<f64> = $records.iter().filter_map(|r| r.$field).collect();
            if vals.len() >= 2 {
                clip_count($name, &mut vals);
                let mut it = vals.into_iter();
                for r in $records.iter_mut() {
                    if r.$field.is_some() {
                        r.$field = it.next();
                    }
                }
            }
        }};
    }
    clip_field!(accidents, duration_min, "accidents.duration");
    clip_field!(accidents, distance_miles, "accidents.distance");
    clip_field!(congestion, duration_min, "congestion.duration");
    clip_field!(congestion, distance_miles, "congestion.distance");
    clip_opt_field!(weather, temperature_f, "weather.temperature");
    clip_opt_field!(weather, wind_chill_f, "weather.wind_chill");
    clip_opt_field!(weather, humidity_pct, "weather.humidity");
    clip_opt_field!(weather, pressure_inhg, "weather.pressure");
    clip_opt_field!(weather, visibility_miles, "weather.visibility");
    clip_opt_field!(weather, wind_speed_mph, "weather.wind_speed");
    clip_opt_field!(weather, precipitation_in, "weather.precipitation");

    // redundancy report over the weather feature table; the encoded vector's
    // feature set is fixed, so this is diagnostic output
    let table = FeatureTable {
        names: vec![
            "temperature".into(),
            "wind_chill".into(),
            "humidity".into(),
            "pressure".into(),
            "visibility".into(),
            "wind_speed".into(),
            "precipitation".into(),
            "wind_direction".into(),
            "condition".into(),
        ],
        columns: vec![
            Column::Numeric(weather.iter().filter_map(|w| w.temperature_f).collect()),
            Column::Numeric(weather.iter().filter_map(|w| w.wind_chill_f).collect()),
            Column::Numeric(weather.iter().filter_map(|w| w.humidity_pct).collect()),
            Column::Numeric(weather.iter().filter_map(|w| w.pressure_inhg).collect()),
            Column::Numeric(weather.iter().filter_map(|w| w.visibility_miles).collect()),
            Column::Numeric(weather.iter().filter_map(|w| w.wind_speed_mph).collect()),
            Column::Numeric(weather.iter().filter_map(|w| w.precipitation_in).collect()),
            Column::Categorical(weather.iter().filter_map(|w| w.wind_direction.clone()).collect()),
            Column::Categorical(weather.iter().filter_map(|w| w.condition.clone()).collect()),
        ],
    };
    let (_, drop_report) = drop_redundant(table, 0.95, 0.90);
    report.dropped_features = drop_report.dropped;

    Ok((accidents, congestion, weather, report))
}

/// One labeled accident for the labels file.
#[derive(Debug, Clone, Serialize)]
pub struct GammaLabelRow {
    pub id: String,
    pub duration_min: f64,
    pub gamma: f64,
    pub gamma_class: u8,
}

#[derive(Debug, Serialize)]
pub struct GammaOutcome {
    pub metrics: FitMetrics,
    pub median: f64,
    pub n_congestion_used: usize,
    pub n_train_accidents: usize,
}

/// Fits the impact function on congestion delays, applies it to accidents,
/// and splits at the training-period median. `train_end` freezes the median
/// on accidents that start before it; None uses all accidents (with a
/// warning, since that leaks test-period information).
pub fn label_gamma(
    congestion: &[CongestionRecord],
    accidents: &[AccidentRecord],
    kind: GammaKind,
    train_end: Option<DateTime<Utc>>,
    seed: u64,
) -> Result<(GammaModel, Vec<GammaLabelRow>, GammaOutcome), PipelineError> {
    let data: Vec<(ImpactTriple, f64)> = congestion
        .iter()
        .filter_map(|c| {
            c.delay_min.map(|d| {
                (
                    ImpactTriple {
                        severity: c.severity,
                        duration_min: c.duration_min,
                        distance_miles: c.distance_miles,
                    },
                    d,
                )
            })
        })
        .collect();
    let n_used = data.len();
    let (model, metrics, _) = fit_gamma(&data, kind, 0.85, seed)?;

    let triples: Vec<ImpactTriple> = accidents
        .iter()
        .map(|a| ImpactTriple {
            severity: a.severity,
            duration_min: a.duration_min,
            distance_miles: a.distance_miles,
        })
        .collect();
    let gammas = apply_gamma(&model, &triples);

    let train_gammas: Vec<f64> = match train_end {
        Some(boundary) => accidents
            .iter()
            .zip(gammas.iter())
            .filter(|(a, _)| a.start_time < boundary)
            .map(|(_, g)| *g)
            .collect(),
        None => {
            logging::warn("no train boundary given; median computed over all accidents");
            gammas.clone()
        }
    };
    if train_gammas.is_empty() {
        return Err(PipelineError::Invalid(
            "no accidents before the training boundary".into(),
        ));
    }
    let median = gamma_median(&train_gammas);
    let classes = classify_gamma(&gammas, median);
    let rows = accidents
        .iter()
        .zip(gammas.iter().zip(classes.iter()))
        .map(|(a, (g, c))| GammaLabelRow {
            id: a.id.clone(),
            duration_min: a.duration_min,
            gamma: *g,
            gamma_class: *c,
        })
        .collect();
    let outcome = GammaOutcome {
        metrics,
        median,
        n_congestion_used: n_used,
        n_train_accidents: train_gammas.len(),
    };
    Ok((model, rows, outcome))
}

/// Explicit grid parameters for pack construction; unset fields derive from
/// the data deterministically.
#[derive(Debug, Clone, Default)]
pub struct PackParams {
    pub origin: Option<(f64, f64)>,
    pub edge_km: Option<f64>,
    pub epoch: Option<DateTime<Utc>>,
    pub end: Option<DateTime<Utc>>,
    pub alpha: Option<usize>,
    pub seed: u64,
    pub input_digests: BTreeMap<String, String>,
    /// weather condition vocabulary for the one-hot block; the built-in set
    /// when None
    pub condition_vocab: Option<Vec<String>>,
}

/// Builds the tensor pack: derives the grid, filters sparse zones, assembles
/// every (zone, interval) vector, and attaches gamma classes.
pub fn build_pack(
    accidents: &[AccidentRecord],
    congestion: &[CongestionRecord],
    weather: &[WeatherRecord],
    poi: &[PoiRecord],
    stations: &StationMap,
    gamma_labels: &[GammaLabelRow],
    train_end: DateTime<Utc>,
    params: &PackParams,
) -> Result<TensorPack, PipelineError> {
    if accidents.is_empty() {
        return Err(PipelineError::Invalid("no accidents to grid".into()));
    }
    let edge_km = params.edge_km.unwrap_or(5.0);
    let (origin_lat, origin_lon) = params.origin.unwrap_or_else(|| {
        let lat = accidents
            .iter()
            .map(|a| a.start_lat)
            .fold(f64::INFINITY, f64::min);
        let lon = accidents
            .iter()
            .map(|a| a.start_lon)
            .fold(f64::INFINITY, f64::min);
        // a hair of margin so the minimum point is strictly inside
        (lat - 1e-6, lon - 1e-6)
    });
    let epoch = params.epoch.unwrap_or_else(|| {
        let first = accidents
            .iter()
            .map(|a| a.start_time)
            .min()
            .expect("nonempty");
        // midnight of the first accident's day
        first - Duration::seconds(i64::from(first.num_seconds_from_midnight()))
    });
    let end = params.end.unwrap_or_else(|| {
        accidents
            .iter()
            .map(|a| a.start_time)
            .max()
            .expect("nonempty")
            + Duration::hours(2)
    });
    if end <= epoch {
        return Err(PipelineError::Invalid("end precedes epoch".into()));
    }
    let n_intervals = ((end - epoch).num_seconds() as f64 / 7200.0).ceil() as usize;

    // provisional config wide enough for any point; the real extents come
    // from the data
    let probe_cfg = GridConfig {
        origin_lat,
        origin_lon,
        edge_km,
        rows: usize::MAX / 2,
        cols: usize::MAX / 2,
        epoch,
        interval_hours: 2,
        n_intervals,
    };
    let mut max_row = 0usize;
    let mut max_col = 0usize;
    let mut out_of_box = 0usize;
    for a in accidents {
        match cell_of(a.start_lat, a.start_lon, &probe_cfg) {
            Ok(c) => {
                max_row = max_row.max(c.row);
                max_col = max_col.max(c.col);
            }
            Err(_) => out_of_box += 1,
        }
    }
    if out_of_box > 0 {
        logging::warn(&format!("{out_of_box} accidents fall outside the grid origin corner"));
    }
    let cfg = GridConfig {
        rows: max_row + 1,
        cols: max_col + 1,
        ..probe_cfg
    };

    // per-zone accident tallies for the sparsity filter
    let mut counts: BTreeMap<CellIndex, (usize, std::collections::BTreeSet<usize>)> = BTreeMap::new();
    for a in accidents {
        if let (Ok(cell), Ok(interval)) = (
            cell_of(a.start_lat, a.start_lon, &cfg),
            interval_of(a.start_time, &cfg),
        ) {
            if interval.0 < cfg.n_intervals {
                let e = counts.entry(cell).or_default();
                e.0 += 1;
                e.1.insert(interval.0);
            }
        }
    }
    let stats: Vec<ZoneAccidentStats> = counts
        .iter()
        .map(|(cell, (count, intervals))| ZoneAccidentStats {
            cell: *cell,
            accident_count: *count,
            accident_intervals: intervals.len(),
        })
        .collect();
    let alpha = params.alpha.unwrap_or(75);
    let (retained, filter_report) = filter_sparse_zones(&stats, alpha, cfg.n_intervals)?;
    logging::info(&format!(
        "sparse-zone filter: {} -> {} zones, accident-interval ratio {:.4} -> {:.4}",
        filter_report.zones_before,
        filter_report.zones_after,
        filter_report.ratio_before,
        filter_report.ratio_after
    ));

    let gamma_by_id: BTreeMap<String, u8> = gamma_labels
        .iter()
        .map(|r| (r.id.clone(), r.gamma_class))
        .collect();
    let schema = FeatureSchema::new(params.condition_vocab.clone().unwrap_or_else(|| {
        crate::ingest::CONDITIONS.iter().map(|s| s.to_string()).collect()
    }));
    let prepared = PreparedData::build(
        cfg.clone(),
        retained.clone(),
        accidents,
        congestion,
        weather,
        stations,
        poi,
        &gamma_by_id,
    );
    let per_zone = assemble_all(&prepared, &schema);

    let boundary = interval_of(train_end, &cfg)
        .map_err(|_| PipelineError::Invalid("train boundary precedes the epoch".into()))?
        .0
        .min(cfg.n_intervals);

    let manifest = build_manifest(&cfg, &schema, &retained, &stats, filter_report, boundary, params);
    let f = schema.f();
    let mut features = Vec::with_capacity(retained.len() * cfg.n_intervals * f);
    let mut gamma = Vec::with_capacity(retained.len() * cfg.n_intervals);
    let acc_col = schema.accident_count_col();
    for zone_vectors in &per_zone {
        for v in zone_vectors {
            debug_assert_eq!(v.encoded.len(), f);
            // the pack is f32 on disk; quantize now so in-memory and
            // reloaded packs are identical
            features.extend(v.encoded.iter().map(|&x| x as f32 as f64));
            let has_accident = v.encoded[acc_col] > 0.0;
            if has_accident != (v.gamma_class > 0) {
                return Err(PipelineError::Invalid(format!(
                    "label/feature inconsistency at zone {} interval {}",
                    v.zone_index, v.interval
                )));
            }
            gamma.push(v.gamma_class);
        }
    }
    Ok(TensorPack {
        manifest,
        features,
        gamma,
    })
}

fn build_manifest(
    cfg: &GridConfig,
    schema: &FeatureSchema,
    retained: &[CellIndex],
    stats: &[ZoneAccidentStats],
    filter_report: SparseFilterReport,
    boundary: usize,
    params: &PackParams,
) -> PackManifest {
    let count_of = |cell: &CellIndex| {
        stats
            .iter()
            .find(|s| s.cell == *cell)
            .map(|s| s.accident_count)
            .unwrap_or(0)
    };
    let zones = retained
        .iter()
        .enumerate()
        .map(|(zone_index, cell)| {
            let (center_lat, center_lon) = cfg.cell_center(*cell);
            ZoneInfo {
                zone_index,
                row: cell.row,
                col: cell.col,
                center_lat,
                center_lon,
                accident_count: count_of(cell),
            }
        })
        .collect();
    let notes: BTreeMap<String, String> = [
        ("aggregation.severity", "max over accidents in the cell-interval"),
        ("aggregation.duration", "mean minutes"),
        ("aggregation.distance", "mean miles"),
        ("aggregation.congestion_delay", "sum of extracted delays"),
        ("absent_intervals", "materialized as zero event groups"),
        ("weather_lookup", "nearest station at the interval start hour"),
        ("gamma_per_interval", "max class over the interval's accidents"),
        ("dtype", "f32 little-endian on disk, f64 compute"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    PackManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: params.seed,
        origin_lat: cfg.origin_lat,
        origin_lon: cfg.origin_lon,
        edge_km: cfg.edge_km,
        epoch: cfg.epoch.to_rfc3339(),
        interval_hours: cfg.interval_hours,
        n_intervals: cfg.n_intervals,
        train_boundary_interval: boundary,
        default_w: 4,
        feature_dim: schema.f(),
        feature_names: schema.names.clone(),
        condition_vocab: schema.conditions.clone(),
        accident_count_col: schema.accident_count_col(),
        category_masks: schema.category_masks(),
        zones,
        sparse_filter: filter_report,
        input_digests: params.input_digests.clone(),
        notes,
    }
}
