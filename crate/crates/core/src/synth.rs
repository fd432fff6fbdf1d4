//! Seeded generator of the four datasets with planted, recoverable
//! structure.
//!
//! Zones come in three classes laid out by (row + col) mod 3: hot zones have
//! high accident rates and severe accidents, warm zones moderate rates and
//! lighter accidents, cold zones too few accidents to survive the sparsity
//! filter. Accident rates are modulated by time of day and self-excite for
//! one interval after an accident, so a window really does carry signal
//! about the next interval. Congestion events follow accidents (plus a
//! random background), and every congestion description embeds its delay,
//! drawn from the linear law delay = a·duration + b·distance + c[severity]
//! (+ noise). The truth manifest records every latent value.

use crate::ingest::{Station, StationMap, WIND_DIRECTIONS};
use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Timelike, Utc};
use impactcast_nn::init;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible config: {0}")]
    Infeasible(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub rows: usize,
    pub cols: usize,
    pub edge_km: f64,
    /// inclusive start date (UTC midnight)
    pub start_date: String,
    /// exclusive end date
    pub end_date: String,
    /// per-interval Poisson accident rates by zone class
    pub rate_hot: f64,
    pub rate_warm: f64,
    pub rate_cold: f64,
    /// rate multiplier term applied the interval after an accident
    pub excitation: f64,
    /// delay = a·duration + b·distance + c[severity−1] + noise
    pub delay_per_duration_min: f64,
    pub delay_per_mile: f64,
    pub delay_severity_base: [f64; 4],
    pub delay_noise_sigma: f64,
    /// 0: integer delays rendered as digits or number words (50/50);
    /// >0: decimal digits at this precision
    pub delay_decimals: usize,
    pub duration_ln_mu: f64,
    pub duration_ln_sigma: f64,
    /// added to duration_ln_mu in hot zones
    pub duration_ln_mu_hot_boost: f64,
    /// background congestion per zone-interval
    pub congestion_background_rate: f64,
    pub weather_missing_rate: f64,
    /// extra near-duplicate accident rows appended for dedup exercises
    pub planted_duplicate_count: usize,
    /// uniform congestion duration range overriding the lognormal draw;
    /// bounded draws never trip the three-sigma clipping rule
    pub congestion_duration_range: Option<(f64, f64)>,
    /// uniform congestion distance range overriding the half-normal draw
    pub congestion_distance_range: Option<(f64, f64)>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            origin_lat: 34.0,
            origin_lon: -118.5,
            rows: 6,
            cols: 6,
            edge_km: 5.0,
            start_date: "2019-02-01".to_string(),
            end_date: "2019-05-02".to_string(),
            rate_hot: 0.16,
            rate_warm: 0.085,
            rate_cold: 0.004,
            excitation: 1.5,
            delay_per_duration_min: 0.18,
            delay_per_mile: 1.2,
            delay_severity_base: [2.0, 4.0, 8.0, 13.0],
            delay_noise_sigma: 1.0,
            delay_decimals: 0,
            duration_ln_mu: 3.4,
            duration_ln_sigma: 0.55,
            duration_ln_mu_hot_boost: 0.2,
            congestion_background_rate: 0.02,
            weather_missing_rate: 0.01,
            planted_duplicate_count: 0,
            congestion_duration_range: None,
            congestion_distance_range: None,
        }
    }
}

impl SynthConfig {
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let json = std::fs::read_to_string(path)?;
        serde_json::from_str(&json).map_err(|e| SynthError::Infeasible(e.to_string()))
    }

    pub fn start(&self) -> Result<DateTime<Utc>, SynthError> {
        parse_date(&self.start_date)
    }

    pub fn end(&self) -> Result<DateTime<Utc>, SynthError> {
        parse_date(&self.end_date)
    }
}

fn parse_date(s: &str) -> Result<DateTime<Utc>, SynthError> {
    let d = NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| SynthError::Infeasible(format!("unparseable date '{s}'")))?;
    Ok(Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).unwrap()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneClass {
    Hot,
    Warm,
    Cold,
}

#[derive(Debug, Clone, Serialize)]
pub struct AccidentTruth {
    pub id: String,
    pub row: usize,
    pub col: usize,
    pub interval: usize,
    pub severity: u8,
    pub duration_min: f64,
    pub distance_miles: f64,
    /// the latent impact value: the delay law applied to this accident
    pub true_delay: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CongestionTruth {
    pub id: String,
    /// the delay exactly as rendered into the description text
    pub rendered_delay: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ZoneTruth {
    pub row: usize,
    pub col: usize,
    pub class: ZoneClass,
}

#[derive(Debug, Serialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub epoch: String,
    pub n_intervals: usize,
    pub stations: Vec<Station>,
    pub zones: Vec<ZoneTruth>,
    pub accidents: Vec<AccidentTruth>,
    pub congestion: Vec<CongestionTruth>,
    pub planted_duplicate_ids: Vec<String>,
}

fn zone_class(row: usize, col: usize) -> ZoneClass {
    match (row + col) % 3 {
        0 => ZoneClass::Hot,
        1 => ZoneClass::Warm,
        _ => ZoneClass::Cold,
    }
}

/// Time-of-day rate factor by interval start hour: morning/evening rush up,
/// night down. Averages to one over a day.
fn tod_factor(hour: u32) -> f64 {
    match hour {
        6 | 8 | 16 => 1.5,
        0 | 2 | 4 => 0.5,
        _ => 1.0,
    }
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let l = (-lambda).exp();
    let mut k = 0usize;
    let mut p = 1.0;
    loop {
        p *= rng.random_range(0.0..1.0f64);
        if p <= l {
            return k;
        }
        k += 1;
    }
}

const UNIT_WORDS: [&str; 9] = [
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];
const TEEN_WORDS: [&str; 10] = [
    "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen",
    "eighteen", "nineteen",
];
const TEN_WORDS: [&str; 8] = [
    "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

fn number_words(n: u32) -> String {
    match n {
        1..=9 => UNIT_WORDS[(n - 1) as usize].to_string(),
        10..=19 => TEEN_WORDS[(n - 10) as usize].to_string(),
        20..=99 => {
            let tens = TEN_WORDS[(n / 10 - 2) as usize];
            if n % 10 == 0 {
                tens.to_string()
            } else {
                format!("{tens}-{}", UNIT_WORDS[(n % 10 - 1) as usize])
            }
        }
        _ => n.to_string(),
    }
}

/// Renders a delay for a description. Returns the text token and the value
/// the token parses back to, which is what the truth manifest records.
fn render_delay(delay: f64, decimals: usize, rng: &mut ChaCha8Rng) -> (String, f64) {
    if decimals > 0 {
        let s = format!("{delay:.decimals$}");
        let v: f64 = s.parse().expect("formatted float parses");
        return (s, v);
    }
    let v = delay.round().max(1.0);
    let i = v as u32;
    if i <= 99 && rng.random_range(0.0..1.0) < 0.5 {
        (number_words(i), v)
    } else {
        (i.to_string(), v)
    }
}

struct ZoneGeom {
    row: usize,
    col: usize,
    class: ZoneClass,
    lat0: f64,
    lon0: f64,
    dlat: f64,
    dlon: f64,
    streets: [String; 2],
}

pub fn generate(cfg: &SynthConfig, out_dir: &Path) -> Result<SynthManifest, SynthError> {
    validate(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let epoch = cfg.start()?;
    let end = cfg.end()?;
    let n_intervals = ((end - epoch).num_hours() / 2) as usize;

    let stations = StationMap::default_la();
    let dlat_per_km = (1.0 / crate::geo::EARTH_RADIUS_KM).to_degrees();
    let dlon_per_km =
        (1.0 / (crate::geo::EARTH_RADIUS_KM * cfg.origin_lat.to_radians().cos())).to_degrees();

    let mut zones = Vec::new();
    for row in 0..cfg.rows {
        for col in 0..cfg.cols {
            zones.push(ZoneGeom {
                row,
                col,
                class: zone_class(row, col),
                lat0: cfg.origin_lat + row as f64 * cfg.edge_km * dlat_per_km,
                lon0: cfg.origin_lon + col as f64 * cfg.edge_km * dlon_per_km,
                dlat: cfg.edge_km * dlat_per_km,
                dlon: cfg.edge_km * dlon_per_km,
                streets: [
                    format!("Zone {row}-{col} Ave"),
                    format!("Zone {row}-{col} Blvd"),
                ],
            });
        }
    }

    let mut acc_rng = init::stream(cfg.seed, "synth/accidents");
    let mut cong_rng = init::stream(cfg.seed, "synth/congestion");
    let mut render_rng = init::stream(cfg.seed, "synth/render");

    // ---- accidents + triggered congestion ----
    let mut accident_rows: Vec<Vec<String>> = Vec::new();
    let mut congestion_rows: Vec<Vec<String>> = Vec::new();
    let mut accidents_truth = Vec::new();
    let mut congestion_truth = Vec::new();
    let mut acc_counter = 0usize;
    let mut cong_counter = 0usize;

    for zone in &zones {
        let base = match zone.class {
            ZoneClass::Hot => cfg.rate_hot,
            ZoneClass::Warm => cfg.rate_warm,
            ZoneClass::Cold => cfg.rate_cold,
        };
        let mut excited = false;
        for interval in 0..n_intervals {
            let start_time = epoch + Duration::hours(2 * interval as i64);
            let rate = base
                * tod_factor(start_time.hour())
                * if excited { 1.0 + cfg.excitation } else { 1.0 };
            let count = poisson(&mut acc_rng, rate);
            excited = count > 0;
            for _ in 0..count {
                acc_counter += 1;
                let id = format!("A{acc_counter:06}");
                let severity = draw_severity(zone.class, &mut acc_rng);
                let mu = cfg.duration_ln_mu
                    + if zone.class == ZoneClass::Hot {
                        cfg.duration_ln_mu_hot_boost
                    } else {
                        0.0
                    };
                // durations in whole seconds so the derived end − start
                // round-trips exactly
                let dur_seconds = ((mu + cfg.duration_ln_sigma * init::standard_normal(&mut acc_rng))
                    .exp()
                    * 60.0)
                    .round()
                    .max(60.0);
                let duration_min = dur_seconds / 60.0;
                let distance_miles = (init::standard_normal(&mut acc_rng).abs() * 0.6
                    + 0.15 * severity as f64)
                    .max(0.01);
                let offset = acc_rng.random_range(0..7200i64);
                let start = start_time + Duration::seconds(offset);
                let end_t = start + Duration::seconds(dur_seconds as i64);
                let lat = zone.lat0 + acc_rng.random_range(0.02..0.98) * zone.dlat;
                let lon = zone.lon0 + acc_rng.random_range(0.02..0.98) * zone.dlon;
                let street = zone.streets[acc_rng.random_range(0..2usize)].clone();
                let true_delay = cfg.delay_per_duration_min * duration_min
                    + cfg.delay_per_mile * distance_miles
                    + cfg.delay_severity_base[(severity - 1) as usize];

                accident_rows.push(accident_row(
                    &id, start, end_t, lat, lon, severity, distance_miles, &street, zone,
                ));
                accidents_truth.push(AccidentTruth {
                    id,
                    row: zone.row,
                    col: zone.col,
                    interval,
                    severity,
                    duration_min,
                    distance_miles,
                    true_delay,
                });

                // accidents pull congestion behind them
                let n_cong = 1 + poisson(&mut cong_rng, 0.4);
                for _ in 0..n_cong {
                    cong_counter += 1;
                    let cid = format!("C{cong_counter:06}");
                    let c_dur = draw_cong_duration(cfg, &mut cong_rng);
                    let c_dist = draw_cong_distance(cfg, &mut cong_rng);
                    let c_sev = severity;
                    let delay_raw = (cfg.delay_per_duration_min * c_dur
                        + cfg.delay_per_mile * c_dist
                        + cfg.delay_severity_base[(c_sev - 1) as usize]
                        + cfg.delay_noise_sigma * init::standard_normal(&mut cong_rng))
                    .max(1.0);
                    let t = start + Duration::seconds(cong_rng.random_range(0..1800i64));
                    let c_lat = (lat + 0.002 * init::standard_normal(&mut cong_rng))
                        .clamp(zone.lat0, zone.lat0 + zone.dlat);
                    let c_lon = (lon + 0.002 * init::standard_normal(&mut cong_rng))
                        .clamp(zone.lon0, zone.lon0 + zone.dlon);
                    let (row, truth) = congestion_row(
                        &cid, t, c_lat, c_lon, c_sev, c_dur, c_dist, &street, delay_raw, cfg,
                        &mut render_rng,
                    );
                    congestion_rows.push(row);
                    congestion_truth.push(truth);
                }
            }
        }
    }

    // ---- background congestion ----
    for zone in &zones {
        for interval in 0..n_intervals {
            let count = poisson(&mut cong_rng, cfg.congestion_background_rate);
            for _ in 0..count {
                cong_counter += 1;
                let cid = format!("C{cong_counter:06}");
                let start_time = epoch + Duration::hours(2 * interval as i64);
                let t = start_time + Duration::seconds(cong_rng.random_range(0..7200i64));
                let c_sev = cong_rng.random_range(1..=4u8);
                let c_dur = draw_cong_duration(cfg, &mut cong_rng);
                let c_dist = draw_cong_distance(cfg, &mut cong_rng);
                let delay_raw = (cfg.delay_per_duration_min * c_dur
                    + cfg.delay_per_mile * c_dist
                    + cfg.delay_severity_base[(c_sev - 1) as usize]
                    + cfg.delay_noise_sigma * init::standard_normal(&mut cong_rng))
                .max(1.0);
                let lat = zone.lat0 + cong_rng.random_range(0.02..0.98) * zone.dlat;
                let lon = zone.lon0 + cong_rng.random_range(0.02..0.98) * zone.dlon;
                let street = zone.streets[cong_rng.random_range(0..2usize)].clone();
                let (row, truth) = congestion_row(
                    &cid, t, lat, lon, c_sev, c_dur, c_dist, &street, delay_raw, cfg,
                    &mut render_rng,
                );
                congestion_rows.push(row);
                congestion_truth.push(truth);
            }
        }
    }

    // ---- planted near-duplicates ----
    let mut planted_ids = Vec::new();
    if cfg.planted_duplicate_count > 0 && !accident_rows.is_empty() {
        let mut dup_rng = init::stream(cfg.seed, "synth/duplicates");
        for k in 0..cfg.planted_duplicate_count {
            let src = dup_rng.random_range(0..accident_rows.len());
            let mut row = accident_rows[src].clone();
            let id = format!("{}D{k}", row[0]);
            row[0] = id.clone();
            // one minute later, same street and location
            let t = crate::ingest::parse_timestamp(&row[1], "UTC").expect("own timestamp");
            row[1] = fmt_time(t + Duration::minutes(1));
            let te = crate::ingest::parse_timestamp(&row[2], "UTC").expect("own timestamp");
            row[2] = fmt_time(te + Duration::minutes(1));
            planted_ids.push(id);
            accident_rows.push(row);
        }
    }

    // ---- weather ----
    let mut weather_rng = init::stream(cfg.seed, "synth/weather");
    let mut weather_rows: Vec<Vec<String>> = Vec::new();
    let n_hours = (end - epoch).num_hours();
    for (si, st) in stations.stations.iter().enumerate() {
        // per-day condition regime, deterministic from the stream
        let mut day_regime = Vec::new();
        for _ in 0..((n_hours / 24) + 2) {
            let r: f64 = weather_rng.random_range(0.0..1.0);
            day_regime.push(if r < 0.15 {
                "Rain"
            } else if r < 0.25 {
                "Fog"
            } else if r < 0.32 {
                "Haze"
            } else if r < 0.6 {
                "Cloudy"
            } else {
                "Clear"
            });
        }
        for h in 0..n_hours {
            let t = epoch + Duration::hours(h);
            let doy = t.ordinal() as f64;
            let hour = t.hour() as f64;
            let season = (2.0 * std::f64::consts::PI * (doy - 105.0) / 365.0).sin();
            let diurnal = (2.0 * std::f64::consts::PI * (hour - 14.0) / 24.0).cos();
            let temp = 60.0 + 14.0 * season + 8.0 * diurnal + si as f64 * 1.5
                + 0.5 * init::standard_normal(&mut weather_rng);
            let wind_speed = (init::standard_normal(&mut weather_rng).abs() * 4.0 + 1.0).min(45.0);
            let wind_chill = temp - 2.0 - 0.3 * wind_speed;
            let humidity = (55.0 + 25.0 * (2.0 * std::f64::consts::PI * doy / 365.0).cos()
                + 3.0 * init::standard_normal(&mut weather_rng))
            .clamp(5.0, 100.0);
            let pressure = 29.9 + 0.15 * season + 0.05 * init::standard_normal(&mut weather_rng);
            let day_ix = (h / 24) as usize;
            let regime = day_regime[day_ix];
            let condition = match regime {
                "Rain" if (6..20).contains(&(hour as u32)) => "Rain",
                "Fog" if (4..9).contains(&(hour as u32)) => "Fog",
                "Haze" if (12..18).contains(&(hour as u32)) => "Haze",
                "Cloudy" => "Cloudy",
                _ => "Clear",
            };
            let precipitation = if condition == "Rain" {
                (init::standard_normal(&mut weather_rng).abs() * 0.05 * 100.0).round() / 100.0
            } else {
                0.0
            };
            let visibility = if condition == "Fog" { 2.0 } else { 9.0 };
            let wind_dir = WIND_DIRECTIONS[(h as usize + si) % WIND_DIRECTIONS.len()];

            let blank = |rng: &mut ChaCha8Rng| rng.random_range(0.0..1.0) < cfg.weather_missing_rate;
            let fmt_or_blank = |v: f64, rng: &mut ChaCha8Rng| {
                if blank(rng) {
                    String::new()
                } else {
                    format!("{:.2}", v)
                }
            };
            weather_rows.push(vec![
                st.code.clone(),
                fmt_time(t),
                fmt_or_blank(temp, &mut weather_rng),
                fmt_or_blank(wind_chill, &mut weather_rng),
                fmt_or_blank(humidity, &mut weather_rng),
                fmt_or_blank(pressure, &mut weather_rng),
                fmt_or_blank(visibility, &mut weather_rng),
                fmt_or_blank(wind_speed, &mut weather_rng),
                if blank(&mut weather_rng) { String::new() } else { wind_dir.to_string() },
                format!("{precipitation:.2}"),
                if blank(&mut weather_rng) { String::new() } else { condition.to_string() },
            ]);
        }
    }

    // ---- points of interest ----
    let mut poi_rng = init::stream(cfg.seed, "synth/poi");
    let mut poi_rows: Vec<Vec<String>> = Vec::new();
    for zone in &zones {
        let kinds: &[&str] = match zone.class {
            ZoneClass::Hot => &[
                "traffic_signal", "junction", "crossing", "stop", "station", "amenity",
            ],
            ZoneClass::Warm => &["traffic_signal", "stop", "crossing"],
            ZoneClass::Cold => &["give_way"],
        };
        for kind in kinds {
            let n = 1 + poi_rng.random_range(0..3usize);
            for _ in 0..n {
                let lat = zone.lat0 + poi_rng.random_range(0.05..0.95) * zone.dlat;
                let lon = zone.lon0 + poi_rng.random_range(0.05..0.95) * zone.dlon;
                poi_rows.push(vec![format!("{lat}"), format!("{lon}"), kind.to_string()]);
            }
        }
    }

    // ---- write files ----
    write_csv(
        &out_dir.join("accidents.csv"),
        &crate::ingest::ACCIDENT_HEADER,
        &accident_rows,
    )?;
    write_csv(
        &out_dir.join("congestion.csv"),
        &crate::ingest::CONGESTION_HEADER,
        &congestion_rows,
    )?;
    write_csv(
        &out_dir.join("weather.csv"),
        &crate::ingest::WEATHER_HEADER,
        &weather_rows,
    )?;
    write_csv(&out_dir.join("poi.csv"), &crate::ingest::POI_HEADER, &poi_rows)?;
    stations
        .to_csv(&out_dir.join("stations.csv"))
        .map_err(|e| SynthError::Infeasible(format!("stations.csv: {e}")))?;

    let manifest = SynthManifest {
        config: cfg.clone(),
        epoch: fmt_time(epoch),
        n_intervals,
        stations: stations.stations,
        zones: zones
            .iter()
            .map(|z| ZoneTruth { row: z.row, col: z.col, class: z.class })
            .collect(),
        accidents: accidents_truth,
        congestion: congestion_truth,
        planted_duplicate_ids: planted_ids,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(out_dir.join("truth.json"), json)?;
    Ok(manifest)
}

fn validate(cfg: &SynthConfig) -> Result<(), SynthError> {
    if cfg.rows == 0 || cfg.cols == 0 {
        return Err(SynthError::Infeasible("empty grid".into()));
    }
    for (name, r) in [
        ("rate_hot", cfg.rate_hot),
        ("rate_warm", cfg.rate_warm),
        ("rate_cold", cfg.rate_cold),
        ("noise", cfg.delay_noise_sigma),
        ("background", cfg.congestion_background_rate),
    ] {
        if r < 0.0 {
            return Err(SynthError::Infeasible(format!("{name} is negative")));
        }
    }
    let (start, end) = (cfg.start()?, cfg.end()?);
    if end <= start {
        return Err(SynthError::Infeasible("end date not after start date".into()));
    }
    Ok(())
}

fn draw_cong_duration(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> f64 {
    match cfg.congestion_duration_range {
        Some((lo, hi)) => rng.random_range(lo..hi),
        None => ((3.2 + 0.5 * init::standard_normal(rng)).exp()).clamp(5.0, 600.0),
    }
}

fn draw_cong_distance(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> f64 {
    match cfg.congestion_distance_range {
        Some((lo, hi)) => rng.random_range(lo..hi),
        None => (init::standard_normal(rng).abs() * 0.8 + 0.2).min(20.0),
    }
}

fn draw_severity(class: ZoneClass, rng: &mut ChaCha8Rng) -> u8 {
    let r: f64 = rng.random_range(0.0..1.0);
    match class {
        ZoneClass::Hot => {
            if r < 0.5 {
                3
            } else {
                4
            }
        }
        ZoneClass::Warm => {
            if r < 0.5 {
                1
            } else if r < 0.9 {
                2
            } else {
                3
            }
        }
        ZoneClass::Cold => {
            if r < 0.5 {
                1
            } else {
                2
            }
        }
    }
}

fn fmt_time(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn day_flag(hour: u32, from: u32, to: u32) -> &'static str {
    if (from..to).contains(&hour) {
        "Day"
    } else {
        "Night"
    }
}

#[allow(clippy::too_many_arguments)]
fn accident_row(
    id: &str,
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    lat: f64,
    lon: f64,
    severity: u8,
    distance: f64,
    street: &str,
    zone: &ZoneGeom,
) -> Vec<String> {
    let hour = start.hour();
    // street-level flags loosely follow the zone class
    let flags: [bool; 13] = {
        let mut f = [false; 13];
        match zone.class {
            ZoneClass::Hot => {
                f[11] = true; // traffic_signal
                f[4] = true; // junction
                f[2] = true; // crossing
            }
            ZoneClass::Warm => {
                f[9] = true; // stop
            }
            ZoneClass::Cold => {}
        }
        f
    };
    let mut row = vec![
        id.to_string(),
        fmt_time(start),
        fmt_time(end),
        format!("{lat}"),
        format!("{lon}"),
        severity.to_string(),
        format!("{distance}"),
        street.to_string(),
        "UTC".to_string(),
    ];
    for flag in flags {
        row.push(flag.to_string());
    }
    row.push(day_flag(hour, 6, 18).to_string());
    row.push(day_flag(hour, 5, 19).to_string());
    row.push(day_flag(hour, 5, 20).to_string());
    row.push(day_flag(hour, 4, 21).to_string());
    row
}

#[allow(clippy::too_many_arguments)]
fn congestion_row(
    id: &str,
    t: DateTime<Utc>,
    lat: f64,
    lon: f64,
    severity: u8,
    duration: f64,
    distance: f64,
    street: &str,
    delay_raw: f64,
    cfg: &SynthConfig,
    render_rng: &mut ChaCha8Rng,
) -> (Vec<String>, CongestionTruth) {
    let (token, rendered) = render_delay(delay_raw, cfg.delay_decimals, render_rng);
    let minutes_word = if rendered == 1.0 { "minute" } else { "minutes" };
    let direction = ["Northbound", "Southbound", "Eastbound", "Westbound"]
        [render_rng.random_range(0..4usize)];
    let speed: u32 = render_rng.random_range(5..45);
    let speed_token = if render_rng.random_range(0.0..1.0) < 0.5 {
        number_words(speed)
    } else {
        speed.to_string()
    };
    let description = match render_rng.random_range(0..3usize) {
        0 => format!(
            "Delays increasing and delays of {token} {minutes_word} on {street} {direction} in LA. Average speed {speed_token} mph."
        ),
        1 => format!(
            "Delays of {token} {minutes_word} on {street} {direction} between Exit 12 and Exit 14. Average speed {speed_token} mph."
        ),
        _ => format!(
            "Severe delays of {token} {minutes_word} on {street} {direction}. Average speed {speed_token} mph."
        ),
    };
    let row = vec![
        id.to_string(),
        fmt_time(t),
        format!("{lat}"),
        format!("{lon}"),
        severity.to_string(),
        format!("{duration}"),
        format!("{distance}"),
        description,
        String::new(), // delay column starts absent
    ];
    (
        row,
        CongestionTruth {
            id: id.to_string(),
            rendered_delay: rendered,
        },
    )
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), SynthError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Paths of the files one generation writes, keyed by role.
pub fn output_paths(out_dir: &Path) -> BTreeMap<&'static str, PathBuf> {
    [
        ("accidents", out_dir.join("accidents.csv")),
        ("congestion", out_dir.join("congestion.csv")),
        ("weather", out_dir.join("weather.csv")),
        ("poi", out_dir.join("poi.csv")),
        ("stations", out_dir.join("stations.csv")),
        ("truth", out_dir.join("truth.json")),
    ]
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rates_give_a_header_only_accident_file() {
        let dir = std::env::temp_dir().join("impactcast_synth_zero");
        let cfg = SynthConfig {
            rate_hot: 0.0,
            rate_warm: 0.0,
            rate_cold: 0.0,
            congestion_background_rate: 0.0,
            end_date: "2019-02-03".to_string(),
            ..SynthConfig::default()
        };
        let manifest = generate(&cfg, &dir).unwrap();
        assert!(manifest.accidents.is_empty());
        let contents = std::fs::read_to_string(dir.join("accidents.csv")).unwrap();
        assert_eq!(contents.lines().count(), 1, "header only");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn word_rendering_covers_the_range() {
        assert_eq!(number_words(9), "nine");
        assert_eq!(number_words(22), "twenty-two");
        assert_eq!(number_words(40), "forty");
        assert_eq!(number_words(99), "ninety-nine");
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let dir = std::env::temp_dir().join("impactcast_synth_bad");
        let cfg = SynthConfig {
            end_date: "2019-01-01".to_string(),
            ..SynthConfig::default()
        };
        assert!(matches!(generate(&cfg, &dir), Err(SynthError::Infeasible(_))));
    }
}
