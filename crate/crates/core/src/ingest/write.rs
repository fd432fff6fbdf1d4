//! CSV writers for cleaned records, mirroring the input schemas so every
//! pipeline stage consumes plain files from the stage before it.

use super::{
    AccidentRecord, CongestionRecord, IngestError, PoiRecord, WeatherRecord, ACCIDENT_HEADER,
    CONGESTION_HEADER, POI_HEADER, WEATHER_HEADER,
};
use chrono::{DateTime, Utc};
use std::path::Path;

fn fmt_time(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn day(b: bool) -> &'static str {
    if b {
        "Day"
    } else {
        "Night"
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn write_accidents(path: &Path, records: &[AccidentRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ACCIDENT_HEADER)?;
    for r in records {
        let mut row = vec![
            r.id.clone(),
            fmt_time(r.start_time),
            fmt_time(r.end_time),
            format!("{}", r.start_lat),
            format!("{}", r.start_lon),
            r.severity.to_string(),
            format!("{}", r.distance_miles),
            r.street.clone(),
            // times are serialized in UTC, so the offset column is resolved
            "UTC".to_string(),
        ];
        for flag in r.poi_flags {
            row.push(flag.to_string());
        }
        for flag in r.day_flags {
            row.push(day(flag).to_string());
        }
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_congestion(path: &Path, records: &[CongestionRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CONGESTION_HEADER)?;
    for r in records {
        w.write_record([
            r.id.clone(),
            fmt_time(r.time),
            format!("{}", r.lat),
            format!("{}", r.lon),
            r.severity.to_string(),
            format!("{}", r.duration_min),
            format!("{}", r.distance_miles),
            r.description.clone(),
            opt(r.delay_min),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_weather(path: &Path, records: &[WeatherRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(WEATHER_HEADER)?;
    for r in records {
        w.write_record([
            r.airport.clone(),
            fmt_time(r.time),
            opt(r.temperature_f),
            opt(r.wind_chill_f),
            opt(r.humidity_pct),
            opt(r.pressure_inhg),
            opt(r.visibility_miles),
            opt(r.wind_speed_mph),
            r.wind_direction.clone().unwrap_or_default(),
            opt(r.precipitation_in),
            r.condition.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_poi(path: &Path, records: &[PoiRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(POI_HEADER)?;
    for r in records {
        w.write_record([format!("{}", r.lat), format!("{}", r.lon), r.kind.clone()])?;
    }
    w.flush()?;
    Ok(())
}
