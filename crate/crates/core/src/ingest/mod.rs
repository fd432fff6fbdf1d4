//! Parsing and cleaning of the four source datasets.
//!
//! Input files are RFC-4180 CSV with a header row. Malformed rows are never
//! dropped silently: each parse collects them into a rejects report carrying
//! the original line number and a reason, and a parse aborts outright when
//! more than half of the data rows reject.

pub mod clean;
pub mod delay;
pub mod write;

pub use clean::{clip_outliers, dedup_accidents, drop_redundant, impute_missing, Column, DropReport, FeatureTable, ImputeReport};
pub use delay::extract_delay;
pub use write::{write_accidents, write_congestion, write_poi, write_weather};

use chrono::{DateTime, FixedOffset, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing input file {0}")]
    MissingFile(String),
    #[error("header mismatch for {kind:?}: expected [{expected}], got [{got}]")]
    HeaderMismatch {
        kind: DatasetKind,
        expected: String,
        got: String,
    },
    #[error("{rejected} of {total} rows rejected for {kind:?}; first reasons: {sample}")]
    TooManyRejects {
        kind: DatasetKind,
        rejected: usize,
        total: usize,
        sample: String,
    },
    #[error("weather feature '{0}' has no observed values to impute from")]
    FeatureEntirelyMissing(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetKind {
    Accidents,
    Congestion,
    Weather,
    Poi,
}

/// The 13 street-level point-of-interest kinds, in canonical column order.
pub const POI_KINDS: [&str; 13] = [
    "amenity",
    "bump",
    "crossing",
    "give_way",
    "junction",
    "no_exit",
    "railway",
    "roundabout",
    "station",
    "stop",
    "traffic_calming",
    "traffic_signal",
    "turning_loop",
];

/// Accepted severity categories for accident and congestion events.
pub const SEVERITY_CATEGORIES: [u8; 4] = [1, 2, 3, 4];

/// Weather condition vocabulary; also the one-hot order in feature encoding.
pub const CONDITIONS: [&str; 5] = ["Clear", "Cloudy", "Fog", "Haze", "Rain"];

/// Wind direction vocabulary.
pub const WIND_DIRECTIONS: [&str; 17] = [
    "CALM", "E", "ENE", "ESE", "N", "NE", "NNE", "NNW", "NW", "S", "SE", "SSE", "SSW", "SW", "W",
    "WNW", "WSW",
];

#[derive(Debug, Clone, PartialEq)]
pub struct AccidentRecord {
    pub id: String,
    pub start_time: DateTime<Utc>,
    pub end_time: DateTime<Utc>,
    pub start_lat: f64,
    pub start_lon: f64,
    pub severity: u8,
    pub distance_miles: f64,
    /// Derived end − start, minutes.
    pub duration_min: f64,
    pub street: String,
    pub time_zone: String,
    pub poi_flags: [bool; 13],
    /// Day-part flags, true = Day: sunrise_sunset, civil, nautical,
    /// astronomical twilight.
    pub day_flags: [bool; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CongestionRecord {
    pub id: String,
    pub time: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    pub severity: u8,
    pub duration_min: f64,
    pub distance_miles: f64,
    pub description: String,
    /// Populated by `extract_delay`; absent until then.
    pub delay_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherRecord {
    pub airport: String,
    pub time: DateTime<Utc>,
    pub temperature_f: Option<f64>,
    pub wind_chill_f: Option<f64>,
    pub humidity_pct: Option<f64>,
    pub pressure_inhg: Option<f64>,
    pub visibility_miles: Option<f64>,
    pub wind_speed_mph: Option<f64>,
    pub precipitation_in: Option<f64>,
    pub wind_direction: Option<String>,
    pub condition: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoiRecord {
    pub lat: f64,
    pub lon: f64,
    pub kind: String,
}

/// A weather station with a fixed location.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Station {
    pub code: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationMap {
    pub stations: Vec<Station>,
}

impl StationMap {
    /// The four Los Angeles area stations used when no map file is given.
    pub fn default_la() -> Self {
        StationMap {
            stations: vec![
                Station { code: "LAX".into(), lat: 33.9416, lon: -118.4085 },
                Station { code: "BUR".into(), lat: 34.1983, lon: -118.3574 },
                Station { code: "VNY".into(), lat: 34.2097, lon: -118.4892 },
                Station { code: "WHP".into(), lat: 34.2593, lon: -118.4134 },
            ],
        }
    }

    pub fn from_csv(path: &Path) -> Result<Self, IngestError> {
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|_| IngestError::MissingFile(path.display().to_string()))?;
        let mut stations = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            stations.push(Station {
                code: rec.get(0).unwrap_or_default().to_string(),
                lat: rec.get(1).unwrap_or_default().parse().unwrap_or(f64::NAN),
                lon: rec.get(2).unwrap_or_default().parse().unwrap_or(f64::NAN),
            });
        }
        Ok(StationMap { stations })
    }

    pub fn to_csv(&self, path: &Path) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["code", "lat", "lon"])?;
        for s in &self.stations {
            w.write_record([&s.code, &format!("{:.6}", s.lat), &format!("{:.6}", s.lon)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn get(&self, code: &str) -> Option<&Station> {
        self.stations.iter().find(|s| s.code == code)
    }

    pub fn nearest(&self, lat: f64, lon: f64) -> &Station {
        self.stations
            .iter()
            .min_by(|a, b| {
                let da = crate::geo::great_circle_km(lat, lon, a.lat, a.lon);
                let db = crate::geo::great_circle_km(lat, lon, b.lat, b.lon);
                da.partial_cmp(&db).unwrap()
            })
            .expect("station map is never empty")
    }
}

/// One rejected row: its 1-based line number in the source file and why.
#[derive(Debug, Clone, Serialize)]
pub struct Reject {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug)]
pub enum DatasetRecords {
    Accidents(Vec<AccidentRecord>),
    Congestion(Vec<CongestionRecord>),
    Weather(Vec<WeatherRecord>),
    Poi(Vec<PoiRecord>),
}

#[derive(Debug)]
pub struct ParseOutcome {
    pub records: DatasetRecords,
    pub rejects: Vec<Reject>,
}

pub const ACCIDENT_HEADER: [&str; 26] = [
    "id", "start_time", "end_time", "start_lat", "start_lon", "severity", "distance", "street",
    "time_zone", "amenity", "bump", "crossing", "give_way", "junction", "no_exit", "railway",
    "roundabout", "station", "stop", "traffic_calming", "traffic_signal", "turning_loop",
    "sunrise_sunset", "civil_twilight", "nautical_twilight", "astronomical_twilight",
];

pub const CONGESTION_HEADER: [&str; 9] = [
    "id", "time", "lat", "lon", "severity", "duration", "distance", "description", "delay",
];

pub const WEATHER_HEADER: [&str; 11] = [
    "airport", "time", "temperature", "wind_chill", "humidity", "pressure", "visibility",
    "wind_speed", "wind_direction", "precipitation", "condition",
];

pub const POI_HEADER: [&str; 3] = ["lat", "lon", "kind"];

fn expected_header(kind: DatasetKind) -> &'static [&'static str] {
    match kind {
        DatasetKind::Accidents => &ACCIDENT_HEADER,
        DatasetKind::Congestion => &CONGESTION_HEADER,
        DatasetKind::Weather => &WEATHER_HEADER,
        DatasetKind::Poi => &POI_HEADER,
    }
}

/// Parse one dataset file. Valid rows become records; invalid rows become
/// rejects. Fails when the file is missing, the header row does not match the
/// kind's schema, or more than half of the data rows reject.
pub fn parse_dataset(path: &Path, kind: DatasetKind) -> Result<ParseOutcome, IngestError> {
    if !path.exists() {
        return Err(IngestError::MissingFile(path.display().to_string()));
    }
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let expected = expected_header(kind);
    if header != expected {
        return Err(IngestError::HeaderMismatch {
            kind,
            expected: expected.join(","),
            got: header.join(","),
        });
    }

    let mut rejects = Vec::new();
    let mut n_rows = 0usize;
    let mut accidents = Vec::new();
    let mut congestion = Vec::new();
    let mut weather = Vec::new();
    let mut poi = Vec::new();

    for rec in rdr.records() {
        let rec = rec?;
        n_rows += 1;
        // line numbers are 1-based; data starts after the header
        let line = rec.position().map(|p| p.line()).unwrap_or(n_rows as u64 + 1);
        let parsed: Result<(), String> = match kind {
            DatasetKind::Accidents => parse_accident_row(&rec).map(|r| accidents.push(r)),
            DatasetKind::Congestion => parse_congestion_row(&rec).map(|r| congestion.push(r)),
            DatasetKind::Weather => parse_weather_row(&rec).map(|r| weather.push(r)),
            DatasetKind::Poi => parse_poi_row(&rec).map(|r| poi.push(r)),
        };
        if let Err(reason) = parsed {
            rejects.push(Reject { line, reason });
        }
    }

    if n_rows > 0 && rejects.len() * 2 > n_rows {
        let sample = rejects
            .iter()
            .take(3)
            .map(|r| format!("line {}: {}", r.line, r.reason))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(IngestError::TooManyRejects {
            kind,
            rejected: rejects.len(),
            total: n_rows,
            sample,
        });
    }

    let records = match kind {
        DatasetKind::Accidents => DatasetRecords::Accidents(accidents),
        DatasetKind::Congestion => DatasetRecords::Congestion(congestion),
        DatasetKind::Weather => DatasetRecords::Weather(weather),
        DatasetKind::Poi => DatasetRecords::Poi(poi),
    };
    Ok(ParseOutcome { records, rejects })
}

/// Writes the rejects report: original line number plus reason.
pub fn write_rejects(path: &Path, rejects: &[(DatasetKind, Vec<Reject>)]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dataset", "line", "reason"])?;
    for (kind, rs) in rejects {
        for r in rs {
            w.write_record([&format!("{kind:?}"), &r.line.to_string(), &r.reason])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn field<'a>(rec: &'a csv::StringRecord, ix: usize, name: &str) -> Result<&'a str, String> {
    rec.get(ix).ok_or_else(|| format!("missing field {name}"))
}

fn parse_f64(s: &str, name: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format!("{name} is not a number: '{s}'"))
}

fn parse_opt_f64(s: &str, name: &str) -> Result<Option<f64>, String> {
    let t = s.trim();
    if t.is_empty() {
        return Ok(None);
    }
    parse_f64(t, name).map(Some)
}

fn parse_bool(s: &str, name: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(format!("{name} is not a boolean: '{other}'")),
    }
}

fn parse_day_flag(s: &str, name: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "day" => Ok(true),
        "night" => Ok(false),
        other => Err(format!("{name} must be Day or Night, got '{other}'")),
    }
}

/// Parses a timestamp to UTC. RFC-3339 strings carry their own offset; naive
/// strings are interpreted with the record's time-zone column, which accepts
/// "UTC" or a fixed offset like "UTC-08:00" / "+05:30".
pub fn parse_timestamp(s: &str, time_zone: &str) -> Result<DateTime<Utc>, String> {
    let t = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        return Ok(dt.with_timezone(&Utc));
    }
    let naive = NaiveDateTime::parse_from_str(t, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(t, "%Y-%m-%d %H:%M:%S"))
        .map_err(|_| format!("unparseable timestamp '{t}'"))?;
    let offset = parse_offset(time_zone)?;
    Ok(offset
        .from_local_datetime(&naive)
        .single()
        .ok_or_else(|| format!("ambiguous local time '{t}'"))?
        .with_timezone(&Utc))
}

fn parse_offset(tz: &str) -> Result<FixedOffset, String> {
    let t = tz.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("utc") {
        return Ok(FixedOffset::east_opt(0).unwrap());
    }
    let rest = t.strip_prefix("UTC").unwrap_or(t);
    let (sign, body) = match rest.as_bytes().first() {
        Some(b'+') => (1i32, &rest[1..]),
        Some(b'-') => (-1i32, &rest[1..]),
        _ => return Err(format!("unsupported time zone '{tz}'")),
    };
    let mut it = body.split(':');
    let hours: i32 = it
        .next()
        .and_then(|h| h.parse().ok())
        .ok_or_else(|| format!("unsupported time zone '{tz}'"))?;
    let minutes: i32 = it.next().and_then(|m| m.parse().ok()).unwrap_or(0);
    FixedOffset::east_opt(sign * (hours * 3600 + minutes * 60))
        .ok_or_else(|| format!("offset out of range '{tz}'"))
}

fn parse_accident_row(rec: &csv::StringRecord) -> Result<AccidentRecord, String> {
    let id = field(rec, 0, "id")?.trim().to_string();
    if id.is_empty() {
        return Err("empty id".into());
    }
    let time_zone = field(rec, 8, "time_zone")?.trim().to_string();
    let start_time = parse_timestamp(field(rec, 1, "start_time")?, &time_zone)?;
    let end_time = parse_timestamp(field(rec, 2, "end_time")?, &time_zone)?;
    if end_time < start_time {
        return Err("end_time before start_time".into());
    }
    let start_lat = parse_f64(field(rec, 3, "start_lat")?, "start_lat")?;
    let start_lon = parse_f64(field(rec, 4, "start_lon")?, "start_lon")?;
    if !(-90.0..=90.0).contains(&start_lat) || !(-180.0..=180.0).contains(&start_lon) {
        return Err("coordinates out of range".into());
    }
    let severity_raw = parse_f64(field(rec, 5, "severity")?, "severity")?;
    let severity = severity_raw as u8;
    if severity_raw.fract() != 0.0 || !SEVERITY_CATEGORIES.contains(&severity) {
        return Err(format!("severity {severity_raw} outside category set"));
    }
    let distance_miles = parse_f64(field(rec, 6, "distance")?, "distance")?;
    if distance_miles < 0.0 {
        return Err("negative distance".into());
    }
    let street = field(rec, 7, "street")?.trim().to_string();
    let mut poi_flags = [false; 13];
    for (k, flag) in poi_flags.iter_mut().enumerate() {
        *flag = parse_bool(field(rec, 9 + k, POI_KINDS[k])?, POI_KINDS[k])?;
    }
    let mut day_flags = [false; 4];
    let day_names = [
        "sunrise_sunset",
        "civil_twilight",
        "nautical_twilight",
        "astronomical_twilight",
    ];
    for (k, flag) in day_flags.iter_mut().enumerate() {
        *flag = parse_day_flag(field(rec, 22 + k, day_names[k])?, day_names[k])?;
    }
    let duration_min = (end_time - start_time).num_seconds() as f64 / 60.0;
    Ok(AccidentRecord {
        id,
        start_time,
        end_time,
        start_lat,
        start_lon,
        severity,
        distance_miles,
        duration_min,
        street,
        time_zone,
        poi_flags,
        day_flags,
    })
}

fn parse_congestion_row(rec: &csv::StringRecord) -> Result<CongestionRecord, String> {
    let id = field(rec, 0, "id")?.trim().to_string();
    if id.is_empty() {
        return Err("empty id".into());
    }
    let time = parse_timestamp(field(rec, 1, "time")?, "UTC")?;
    let lat = parse_f64(field(rec, 2, "lat")?, "lat")?;
    let lon = parse_f64(field(rec, 3, "lon")?, "lon")?;
    let severity_raw = parse_f64(field(rec, 4, "severity")?, "severity")?;
    let severity = severity_raw as u8;
    if severity_raw.fract() != 0.0 || !SEVERITY_CATEGORIES.contains(&severity) {
        return Err(format!("severity {severity_raw} outside category set"));
    }
    let duration_min = parse_f64(field(rec, 5, "duration")?, "duration")?;
    if duration_min < 0.0 {
        return Err("negative duration".into());
    }
    let distance_miles = parse_f64(field(rec, 6, "distance")?, "distance")?;
    if distance_miles < 0.0 {
        return Err("negative distance".into());
    }
    let description = field(rec, 7, "description")?.to_string();
    let delay_min = parse_opt_f64(field(rec, 8, "delay").unwrap_or(""), "delay")?;
    if let Some(d) = delay_min {
        if d < 0.0 {
            return Err("negative delay".into());
        }
    }
    Ok(CongestionRecord {
        id,
        time,
        lat,
        lon,
        severity,
        duration_min,
        distance_miles,
        description,
        delay_min,
    })
}

fn parse_weather_row(rec: &csv::StringRecord) -> Result<WeatherRecord, String> {
    let airport = field(rec, 0, "airport")?.trim().to_string();
    if airport.is_empty() {
        return Err("empty airport code".into());
    }
    let time = parse_timestamp(field(rec, 1, "time")?, "UTC")?;
    let humidity_pct = parse_opt_f64(field(rec, 4, "humidity")?, "humidity")?;
    if let Some(h) = humidity_pct {
        if !(0.0..=100.0).contains(&h) {
            return Err(format!("humidity {h} outside [0,100]"));
        }
    }
    let wind_direction = {
        let s = field(rec, 8, "wind_direction")?.trim().to_string();
        if s.is_empty() {
            None
        } else if WIND_DIRECTIONS.contains(&s.as_str()) {
            Some(s)
        } else {
            return Err(format!("wind_direction '{s}' outside category set"));
        }
    };
    let condition = {
        let s = field(rec, 10, "condition")?.trim().to_string();
        if s.is_empty() {
            None
        } else if CONDITIONS.contains(&s.as_str()) {
            Some(s)
        } else {
            return Err(format!("condition '{s}' outside category set"));
        }
    };
    Ok(WeatherRecord {
        airport,
        time,
        temperature_f: parse_opt_f64(field(rec, 2, "temperature")?, "temperature")?,
        wind_chill_f: parse_opt_f64(field(rec, 3, "wind_chill")?, "wind_chill")?,
        humidity_pct,
        pressure_inhg: parse_opt_f64(field(rec, 5, "pressure")?, "pressure")?,
        visibility_miles: parse_opt_f64(field(rec, 6, "visibility")?, "visibility")?,
        wind_speed_mph: parse_opt_f64(field(rec, 7, "wind_speed")?, "wind_speed")?,
        precipitation_in: parse_opt_f64(field(rec, 9, "precipitation")?, "precipitation")?,
        wind_direction,
        condition,
    })
}

fn parse_poi_row(rec: &csv::StringRecord) -> Result<PoiRecord, String> {
    let lat = parse_f64(field(rec, 0, "lat")?, "lat")?;
    let lon = parse_f64(field(rec, 1, "lon")?, "lon")?;
    let kind = field(rec, 2, "kind")?.trim().to_string();
    if !POI_KINDS.contains(&kind.as_str()) {
        return Err(format!("poi kind '{kind}' outside enumeration"));
    }
    Ok(PoiRecord { lat, lon, kind })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(name: &str, contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("impactcast_ingest_tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn empty_file_with_valid_header_yields_empty_list() {
        let path = write_tmp("empty_poi.csv", "lat,lon,kind\n");
        let out = parse_dataset(&path, DatasetKind::Poi).unwrap();
        match out.records {
            DatasetRecords::Poi(v) => assert!(v.is_empty()),
            _ => panic!("wrong kind"),
        }
        assert!(out.rejects.is_empty());
    }

    #[test]
    fn end_before_start_routes_to_rejects() {
        let row = "A1,2019-02-01T10:00:00Z,2019-02-01T09:00:00Z,34.0,-118.4,2,0.5,Main St,UTC,\
                   false,false,false,false,false,false,false,false,false,false,false,false,false,\
                   Day,Day,Day,Day";
        let path = write_tmp(
            "acc_bad.csv",
            &format!("{}\n{}\n", ACCIDENT_HEADER.join(","), row),
        );
        // a single bad row of one row total would trip the >50% abort, so add
        // a good row alongside
        let good = "A2,2019-02-01T09:00:00Z,2019-02-01T10:00:00Z,34.0,-118.4,2,0.5,Main St,UTC,\
                    false,false,false,false,false,false,false,false,false,false,false,false,false,\
                    Day,Day,Day,Day";
        let path2 = write_tmp(
            "acc_mixed.csv",
            &format!("{}\n{}\n{}\n{}\n", ACCIDENT_HEADER.join(","), good, row, good),
        );
        assert!(matches!(
            parse_dataset(&path, DatasetKind::Accidents),
            Err(IngestError::TooManyRejects { .. })
        ));
        let out = parse_dataset(&path2, DatasetKind::Accidents).unwrap();
        assert_eq!(out.rejects.len(), 1);
        assert_eq!(out.rejects[0].line, 3);
        assert!(out.rejects[0].reason.contains("end_time"));
    }

    #[test]
    fn header_mismatch_is_an_error() {
        let path = write_tmp("poi_badheader.csv", "lat,lon,type\n34.0,-118.0,stop\n");
        assert!(matches!(
            parse_dataset(&path, DatasetKind::Poi),
            Err(IngestError::HeaderMismatch { .. })
        ));
    }

    #[test]
    fn naive_timestamps_respect_the_offset_column() {
        let utc = parse_timestamp("2019-02-01T08:00:00", "UTC").unwrap();
        let la = parse_timestamp("2019-02-01T00:00:00", "UTC-08:00").unwrap();
        assert_eq!(utc, la);
        let rfc = parse_timestamp("2019-02-01T00:00:00-08:00", "UTC").unwrap();
        assert_eq!(rfc, utc);
    }

    #[test]
    fn duration_is_derived_from_the_time_pair() {
        let row = "A1,2019-02-01T09:00:00Z,2019-02-01T09:45:00Z,34.0,-118.4,3,0.5,Main St,UTC,\
                   true,false,false,false,false,false,false,false,false,false,false,false,false,\
                   Day,Day,Night,Night";
        let path = write_tmp(
            "acc_dur.csv",
            &format!("{}\n{}\n", ACCIDENT_HEADER.join(","), row),
        );
        let out = parse_dataset(&path, DatasetKind::Accidents).unwrap();
        match out.records {
            DatasetRecords::Accidents(v) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].duration_min, 45.0);
                assert!(v[0].poi_flags[0]);
                assert_eq!(v[0].day_flags, [true, true, false, false]);
            }
            _ => panic!("wrong kind"),
        }
    }
}
