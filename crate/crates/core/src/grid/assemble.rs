//! Feature-vector assembly: one encoded vector per retained zone per 2-hour
//! interval. Intervals with no events are materialized with zeroed event
//! groups so every zone's series is gapless.

use super::{cell_of, interval_of, CellIndex, GridConfig};
use crate::ingest::{
    extract_delay, AccidentRecord, CongestionRecord, PoiRecord, StationMap, WeatherRecord,
    POI_KINDS,
};
use crate::logging;
use chrono::{Datelike, Timelike};
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Column layout of the encoded vector. The raw 26 features expand to
/// F = 30 + |conditions| encoded columns (35 with the default five-condition
/// vocabulary): day-of-week one-hot (7), part-of-day, daylight, weather
/// condition one-hot, four accident aggregates, two congestion aggregates,
/// cell center coordinates, and the 13 point-of-interest flags. The zone
/// index is carried separately and never encoded.
#[derive(Debug, Clone)]
pub struct FeatureSchema {
    pub conditions: Vec<String>,
    pub names: Vec<String>,
}

impl FeatureSchema {
    pub fn new(mut conditions: Vec<String>) -> Self {
        conditions.sort();
        conditions.dedup();
        let mut names = Vec::new();
        for d in 0..7 {
            names.push(format!("dow_{d}"));
        }
        names.push("part_of_day".to_string());
        names.push("daylight".to_string());
        for c in &conditions {
            names.push(format!("cond_{c}"));
        }
        names.push("severity_max".to_string());
        names.push("accident_count".to_string());
        names.push("duration_mean_min".to_string());
        names.push("distance_mean_miles".to_string());
        names.push("congestion_count".to_string());
        names.push("congestion_delay_min".to_string());
        names.push("center_lat".to_string());
        names.push("center_lon".to_string());
        for kind in POI_KINDS {
            names.push(format!("poi_{kind}"));
        }
        FeatureSchema { conditions, names }
    }

    pub fn f(&self) -> usize {
        self.names.len()
    }

    pub fn accident_count_col(&self) -> usize {
        9 + self.conditions.len() + 1
    }

    /// Feature-category column masks, keyed by category name.
    pub fn category_masks(&self) -> BTreeMap<String, Vec<usize>> {
        let c = self.conditions.len();
        let mut m = BTreeMap::new();
        m.insert("temporal".to_string(), (0..9).collect());
        m.insert("weather".to_string(), (9..9 + c).collect());
        m.insert("accident".to_string(), (9 + c..13 + c).collect());
        m.insert("congestion".to_string(), (13 + c..15 + c).collect());
        m.insert("spatial".to_string(), (15 + c..30 + c).collect());
        m
    }
}

#[derive(Debug, Clone, Default)]
struct AccidentAgg {
    count: usize,
    severity_max: u8,
    duration_sum: f64,
    distance_sum: f64,
    gamma_max: u8,
}

#[derive(Debug, Clone, Default)]
struct CongestionAgg {
    count: usize,
    delay_sum: f64,
}

/// Event data bucketed by (zone, interval), ready for assembly.
pub struct PreparedData {
    pub cfg: GridConfig,
    pub zones: Vec<CellIndex>,
    accidents: BTreeMap<(usize, usize), AccidentAgg>,
    congestion: BTreeMap<(usize, usize), CongestionAgg>,
    /// (station code, hours from epoch) → condition
    weather: BTreeMap<(String, i64), Option<String>>,
    nearest_station: Vec<String>,
    poi_flags: Vec<[bool; 13]>,
    pub skipped_out_of_range: usize,
}

impl PreparedData {
    /// Buckets cleaned records into retained (zone, interval) cells.
    /// `gamma_by_id` carries each accident's gamma class from the labeling
    /// stage; accidents without a label contribute class 1 and a warning.
    pub fn build(
        cfg: GridConfig,
        retained: Vec<CellIndex>,
        accidents: &[AccidentRecord],
        congestion: &[CongestionRecord],
        weather: &[WeatherRecord],
        stations: &StationMap,
        poi: &[PoiRecord],
        gamma_by_id: &BTreeMap<String, u8>,
    ) -> PreparedData {
        let zone_of: BTreeMap<CellIndex, usize> = retained
            .iter()
            .enumerate()
            .map(|(i, c)| (*c, i))
            .collect();
        let mut skipped = 0usize;
        let mut unlabeled = 0usize;

        let mut acc_map: BTreeMap<(usize, usize), AccidentAgg> = BTreeMap::new();
        for a in accidents {
            let Some((zone, interval)) = locate(a.start_lat, a.start_lon, a.start_time, &cfg, &zone_of)
            else {
                skipped += 1;
                continue;
            };
            let agg = acc_map.entry((zone, interval)).or_default();
            agg.count += 1;
            agg.severity_max = agg.severity_max.max(a.severity);
            agg.duration_sum += a.duration_min;
            agg.distance_sum += a.distance_miles;
            let class = match gamma_by_id.get(&a.id) {
                Some(c) => *c,
                None => {
                    unlabeled += 1;
                    1
                }
            };
            agg.gamma_max = agg.gamma_max.max(class);
        }
        if unlabeled > 0 {
            logging::warn(&format!(
                "{unlabeled} accidents had no gamma label; defaulted to class 1"
            ));
        }

        let mut cong_map: BTreeMap<(usize, usize), CongestionAgg> = BTreeMap::new();
        for c in congestion {
            let Some((zone, interval)) = locate(c.lat, c.lon, c.time, &cfg, &zone_of) else {
                skipped += 1;
                continue;
            };
            let agg = cong_map.entry((zone, interval)).or_default();
            agg.count += 1;
            let delay = match c.delay_min {
                Some(d) => Some(d),
                None => extract_delay(&c.description).ok(),
            };
            if let Some(d) = delay {
                agg.delay_sum += d;
            }
        }

        let mut weather_map: BTreeMap<(String, i64), Option<String>> = BTreeMap::new();
        for w in weather {
            let hours = (w.time - cfg.epoch).num_seconds() / 3600;
            weather_map.insert((w.airport.clone(), hours), w.condition.clone());
        }

        let nearest_station: Vec<String> = retained
            .iter()
            .map(|cell| {
                let (lat, lon) = cfg.cell_center(*cell);
                stations.nearest(lat, lon).code.clone()
            })
            .collect();

        let mut poi_flags = vec![[false; 13]; retained.len()];
        for p in poi {
            if let Ok(cell) = cell_of(p.lat, p.lon, &cfg) {
                if let Some(&zone) = zone_of.get(&cell) {
                    if let Some(k) = POI_KINDS.iter().position(|kind| *kind == p.kind) {
                        poi_flags[zone][k] = true;
                    }
                }
            }
        }

        PreparedData {
            cfg,
            zones: retained,
            accidents: acc_map,
            congestion: cong_map,
            weather: weather_map,
            nearest_station,
            poi_flags,
            skipped_out_of_range: skipped,
        }
    }
}

fn locate(
    lat: f64,
    lon: f64,
    t: chrono::DateTime<chrono::Utc>,
    cfg: &GridConfig,
    zone_of: &BTreeMap<CellIndex, usize>,
) -> Option<(usize, usize)> {
    let cell = cell_of(lat, lon, cfg).ok()?;
    let zone = *zone_of.get(&cell)?;
    let interval = interval_of(t, cfg).ok()?;
    if interval.0 >= cfg.n_intervals {
        return None;
    }
    Some((zone, interval.0))
}

/// The encoded vector for one zone-interval cell, plus its label.
#[derive(Debug, Clone, PartialEq)]
pub struct CellIntervalVector {
    pub zone_index: usize,
    pub interval: usize,
    pub encoded: Vec<f64>,
    pub gamma_class: u8,
}

/// Assembles the vector for one (zone, interval) cell. Absent events mean
/// zeroed aggregate groups; absent weather means an all-zero condition
/// one-hot.
pub fn assemble_vector(
    zone_index: usize,
    interval: usize,
    data: &PreparedData,
    schema: &FeatureSchema,
) -> CellIntervalVector {
    let cfg = &data.cfg;
    let mut v = vec![0.0; schema.f()];
    let start = cfg.epoch + chrono::Duration::hours(cfg.interval_hours * interval as i64);
    let dow = start.weekday().num_days_from_monday() as usize;
    v[dow] = 1.0;
    let hour = start.hour();
    v[7] = if (6..18).contains(&hour) { 1.0 } else { 0.0 };
    v[8] = if (7..19).contains(&hour) { 1.0 } else { 0.0 };

    let station = &data.nearest_station[zone_index];
    let hours = cfg.interval_hours * interval as i64;
    if let Some(Some(cond)) = data.weather.get(&(station.clone(), hours)) {
        if let Some(ix) = schema.conditions.iter().position(|c| c == cond) {
            v[9 + ix] = 1.0;
        }
    }

    let c = schema.conditions.len();
    let mut gamma_class = 0u8;
    if let Some(agg) = data.accidents.get(&(zone_index, interval)) {
        v[9 + c] = agg.severity_max as f64;
        v[10 + c] = agg.count as f64;
        v[11 + c] = agg.duration_sum / agg.count as f64;
        v[12 + c] = agg.distance_sum / agg.count as f64;
        gamma_class = agg.gamma_max;
    }
    if let Some(agg) = data.congestion.get(&(zone_index, interval)) {
        v[13 + c] = agg.count as f64;
        v[14 + c] = agg.delay_sum;
    }

    let (lat, lon) = cfg.cell_center(data.zones[zone_index]);
    v[15 + c] = lat;
    v[16 + c] = lon;
    for (k, &flag) in data.poi_flags[zone_index].iter().enumerate() {
        v[17 + c + k] = if flag { 1.0 } else { 0.0 };
    }

    CellIntervalVector {
        zone_index,
        interval,
        encoded: v,
        gamma_class,
    }
}

/// Assembles all retained zones over the full interval range. Zones run in
/// parallel; the output order is fixed by zone index.
pub fn assemble_all(data: &PreparedData, schema: &FeatureSchema) -> Vec<Vec<CellIntervalVector>> {
    (0..data.zones.len())
        .into_par_iter()
        .map(|z| {
            (0..data.cfg.n_intervals)
                .map(|i| assemble_vector(z, i, data, schema))
                .collect()
        })
        .collect()
}
