//! Cleaning passes: near-duplicate collapse, KNN imputation of weather gaps,
//! three-sigma clipping, and redundant-feature pruning.

use super::{AccidentRecord, IngestError, StationMap, WeatherRecord};
use crate::geo::great_circle_km;
use crate::logging;
use crate::stats::{mean, pearson, pop_std};
use chrono::Duration;
use std::collections::BTreeMap;

/// Dedup tolerances: reports within 100 m and 5 minutes on the same street
/// collapse to the earlier one.
pub const DEDUP_RADIUS_KM: f64 = 0.1;
pub const DEDUP_WINDOW_MIN: i64 = 5;

/// Collapses near-duplicate accident reports. Records are first ordered by
/// (start_time, id) so the survivor set does not depend on input order and the
/// earlier report always wins.
pub fn dedup_accidents(mut records: Vec<AccidentRecord>) -> Vec<AccidentRecord> {
    records.sort_by(|a, b| (a.start_time, &a.id).cmp(&(b.start_time, &b.id)));
    let window = Duration::minutes(DEDUP_WINDOW_MIN);
    let mut kept: Vec<AccidentRecord> = Vec::with_capacity(records.len());
    for rec in records {
        let dup = kept
            .iter()
            .rev()
            .take_while(|k| rec.start_time - k.start_time <= window)
            .any(|k| {
                k.street == rec.street
                    && great_circle_km(k.start_lat, k.start_lon, rec.start_lat, rec.start_lon)
                        <= DEDUP_RADIUS_KM
            });
        if !dup {
            kept.push(rec);
        }
    }
    kept
}

/// KNN distance between two weather observations: absolute time gap in hours
/// plus great-circle kilometers between stations scaled by 1/10.
fn knn_distance(a: &WeatherRecord, b: &WeatherRecord, stations: &StationMap) -> f64 {
    let dt_hours = (a.time - b.time).num_seconds().abs() as f64 / 3600.0;
    let km = match (stations.get(&a.airport), stations.get(&b.airport)) {
        (Some(sa), Some(sb)) => great_circle_km(sa.lat, sa.lon, sb.lat, sb.lon),
        _ => 0.0,
    };
    dt_hours + km / 10.0
}

#[derive(Debug, Default, Clone)]
pub struct ImputeReport {
    /// imputed gap counts per feature name
    pub filled: BTreeMap<String, usize>,
}

macro_rules! impute_numeric {
    ($records:ident, $field:ident, $name:expr, $k:expr, $stations:expr, $report:expr) => {{
        let present: Vec<usize> = (0..$records.len())
            .filter(|&i| $records[i].$field.is_some())
            .collect();
        let missing: Vec<usize> = (0..$records.len())
            .filter(|&i| $records[i].$field.is_none())
            .collect();
        if !missing.is_empty() && present.is_empty() {
            return Err(IngestError::FeatureEntirelyMissing($name.to_string()));
        }
        for &i in &missing {
            let mut dists: Vec<(f64, usize)> = present
                .iter()
                .map(|&j| (knn_distance(&$records[i], &$records[j], $stations), j))
                .collect();
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let neighbors: Vec<f64> = dists
                .iter()
                .take($k)
                .map(|&(_, j)| $records[j].$field.unwrap())
                .collect();
            $records[i].$field = Some(mean(&neighbors));
            *$report.filled.entry($name.to_string()).or_insert(0) += 1;
        }
        if !missing.is_empty() && present.len() < $k {
            logging::warn(&format!(
                "imputing '{}' from only {} observed values (k = {})",
                $name,
                present.len(),
                $k
            ));
        }
    }};
}

macro_rules! impute_categorical {
    ($records:ident, $field:ident, $name:expr, $k:expr, $stations:expr, $report:expr) => {{
        let present: Vec<usize> = (0..$records.len())
            .filter(|&i| $records[i].$field.is_some())
            .collect();
        let missing: Vec<usize> = (0..$records.len())
            .filter(|&i| $records[i].$field.is_none())
            .collect();
        if !missing.is_empty() && present.is_empty() {
            return Err(IngestError::FeatureEntirelyMissing($name.to_string()));
        }
        for &i in &missing {
            let mut dists: Vec<(f64, usize)> = present
                .iter()
                .map(|&j| (knn_distance(&$records[i], &$records[j], $stations), j))
                .collect();
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // mode of the k nearest; ties break toward the lexicographically
            // smallest value so the result is order-free
            let mut votes: BTreeMap<String, usize> = BTreeMap::new();
            for &(_, j) in dists.iter().take($k) {
                *votes
                    .entry($records[j].$field.clone().unwrap())
                    .or_insert(0) += 1;
            }
            let best = votes
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(v, _)| v.clone())
                .expect("at least one vote");
            $records[i].$field = Some(best);
            *$report.filled.entry($name.to_string()).or_insert(0) += 1;
        }
    }};
}

/// Fills weather gaps from the k nearest observations in (time, location)
/// space: mean for numeric features, mode for categorical ones. Non-missing
/// fields are never altered. Errors when a feature has no observed values
/// at all.
pub fn impute_missing(
    records: &mut [WeatherRecord],
    k: usize,
    stations: &StationMap,
) -> Result<ImputeReport, IngestError> {
    let mut report = ImputeReport::default();
    impute_numeric!(records, temperature_f, "temperature", k, stations, report);
    impute_numeric!(records, wind_chill_f, "wind_chill", k, stations, report);
    impute_numeric!(records, humidity_pct, "humidity", k, stations, report);
    impute_numeric!(records, pressure_inhg, "pressure", k, stations, report);
    impute_numeric!(records, visibility_miles, "visibility", k, stations, report);
    impute_numeric!(records, wind_speed_mph, "wind_speed", k, stations, report);
    impute_numeric!(records, precipitation_in, "precipitation", k, stations, report);
    impute_categorical!(records, wind_direction, "wind_direction", k, stations, report);
    impute_categorical!(records, condition, "condition", k, stations, report);
    Ok(report)
}

/// Clamps values outside mean ± 3 std to the nearest bound. The statistics
/// come from the original column, computed once. A zero-variance column is
/// returned unchanged.
pub fn clip_outliers(values: &[f64]) -> Vec<f64> {
    if values.len() < 2 {
        return values.to_vec();
    }
    let mu = mean(values);
    let sigma = pop_std(values);
    if sigma == 0.0 {
        return values.to_vec();
    }
    let (lo, hi) = (mu - 3.0 * sigma, mu + 3.0 * sigma);
    values.iter().map(|&v| v.clamp(lo, hi)).collect()
}

/// A feature table for redundancy pruning.
#[derive(Debug, Clone)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub columns: Vec<Column>,
}

#[derive(Debug, Clone, Default)]
pub struct DropReport {
    /// (feature name, reason)
    pub dropped: Vec<(String, String)>,
}

/// Drops the later member of each numeric pair whose |Pearson r| exceeds
/// `corr_threshold`, and every categorical whose modal frequency exceeds
/// `freq_threshold`.
pub fn drop_redundant(
    table: FeatureTable,
    corr_threshold: f64,
    freq_threshold: f64,
) -> (FeatureTable, DropReport) {
    let n = table.names.len();
    let mut drop = vec![false; n];
    let mut report = DropReport::default();

    for i in 0..n {
        if drop[i] {
            continue;
        }
        if let Column::Numeric(a) = &table.columns[i] {
            for j in (i + 1)..n {
                if drop[j] {
                    continue;
                }
                if let Column::Numeric(b) = &table.columns[j] {
                    let r = pearson(a, b);
                    if r.abs() > corr_threshold {
                        drop[j] = true;
                        report.dropped.push((
                            table.names[j].clone(),
                            format!("correlated with {} (r = {:.4})", table.names[i], r),
                        ));
                    }
                }
            }
        }
    }
    for i in 0..n {
        if drop[i] {
            continue;
        }
        if let Column::Categorical(vals) = &table.columns[i] {
            if vals.is_empty() {
                continue;
            }
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for v in vals {
                *counts.entry(v.as_str()).or_insert(0) += 1;
            }
            let (modal, cnt) = counts
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(v, c)| (*v, *c))
                .unwrap();
            let freq = cnt as f64 / vals.len() as f64;
            if freq > freq_threshold {
                drop[i] = true;
                report.dropped.push((
                    table.names[i].clone(),
                    format!("modal value '{modal}' frequency {freq:.3}"),
                ));
            }
        }
    }

    let mut kept = FeatureTable {
        names: Vec::new(),
        columns: Vec::new(),
    };
    for (i, (name, col)) in table.names.into_iter().zip(table.columns).enumerate() {
        if !drop[i] {
            kept.names.push(name);
            kept.columns.push(col);
        }
    }
    (kept, report)
}
