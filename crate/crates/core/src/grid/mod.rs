//! Space/time discretization into 5 km × 5 km × 2 h cells, sparse-zone
//! filtering, feature-vector assembly, and sliding-window extraction.

pub mod assemble;
pub mod pack;
pub mod windows;

pub use assemble::{assemble_all, assemble_vector, CellIntervalVector, FeatureSchema, PreparedData};
pub use pack::{PackManifest, TensorPack, ZoneInfo};
pub use windows::{build_windows, WindowSample};

use crate::geo::equirect_km;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("point ({lat}, {lon}) falls outside the configured bounding box")]
    OutOfBox { lat: f64, lon: f64 },
    #[error("timestamp {t} precedes the epoch {epoch}")]
    BeforeEpoch { t: String, epoch: String },
    #[error("no zone meets the {alpha}-accident threshold")]
    EmptyRetained { alpha: usize },
    #[error("window {w} exceeds the zone interval count {intervals}")]
    WindowTooLong { w: usize, intervals: usize },
    #[error("pack error: {0}")]
    Pack(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One square cell of the uniform grid, addressed from the origin corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

/// One 2-hour slot counted from the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IntervalIndex(pub usize);

/// Geometry and calendar of one discretization run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub edge_km: f64,
    pub rows: usize,
    pub cols: usize,
    pub epoch: DateTime<Utc>,
    pub interval_hours: i64,
    pub n_intervals: usize,
}

impl GridConfig {
    /// Cell center coordinates, inverting the equirectangular projection.
    pub fn cell_center(&self, cell: CellIndex) -> (f64, f64) {
        let north_km = (cell.row as f64 + 0.5) * self.edge_km;
        let east_km = (cell.col as f64 + 0.5) * self.edge_km;
        let lat = self.origin_lat + (north_km / crate::geo::EARTH_RADIUS_KM).to_degrees();
        let lon = self.origin_lon
            + (east_km / (crate::geo::EARTH_RADIUS_KM * self.origin_lat.to_radians().cos()))
                .to_degrees();
        (lat, lon)
    }
}

/// Maps a point to its grid cell through an equirectangular projection at the
/// origin latitude.
pub fn cell_of(lat: f64, lon: f64, cfg: &GridConfig) -> Result<CellIndex, GridError> {
    let (east, north) = equirect_km(cfg.origin_lat, cfg.origin_lon, lat, lon);
    if east < 0.0 || north < 0.0 {
        return Err(GridError::OutOfBox { lat, lon });
    }
    let row = (north / cfg.edge_km).floor() as usize;
    let col = (east / cfg.edge_km).floor() as usize;
    if row >= cfg.rows || col >= cfg.cols {
        return Err(GridError::OutOfBox { lat, lon });
    }
    Ok(CellIndex { row, col })
}

/// Half-open 2-hour intervals: ordinal = floor((t − epoch) / width).
pub fn interval_of(t: DateTime<Utc>, cfg: &GridConfig) -> Result<IntervalIndex, GridError> {
    if t < cfg.epoch {
        return Err(GridError::BeforeEpoch {
            t: t.to_rfc3339(),
            epoch: cfg.epoch.to_rfc3339(),
        });
    }
    let secs = (t - cfg.epoch).num_seconds();
    Ok(IntervalIndex(
        (secs / (cfg.interval_hours * 3600)) as usize,
    ))
}

/// Accident tallies for one zone over the full run.
#[derive(Debug, Clone)]
pub struct ZoneAccidentStats {
    pub cell: CellIndex,
    pub accident_count: usize,
    /// number of distinct intervals with at least one accident
    pub accident_intervals: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseFilterReport {
    pub alpha: usize,
    pub zones_before: usize,
    pub zones_after: usize,
    /// accident-interval ratio over all zones / over retained zones
    pub ratio_before: f64,
    pub ratio_after: f64,
}

/// Keeps zones with at least `alpha` accidents and reports how the
/// accident-interval ratio moves.
pub fn filter_sparse_zones(
    stats: &[ZoneAccidentStats],
    alpha: usize,
    intervals_per_zone: usize,
) -> Result<(Vec<CellIndex>, SparseFilterReport), GridError> {
    let mut retained: Vec<CellIndex> = stats
        .iter()
        .filter(|z| z.accident_count >= alpha)
        .map(|z| z.cell)
        .collect();
    retained.sort();
    if retained.is_empty() {
        return Err(GridError::EmptyRetained { alpha });
    }
    let total_before: usize = stats.len() * intervals_per_zone;
    let hits_before: usize = stats.iter().map(|z| z.accident_intervals).sum();
    let hits_after: usize = stats
        .iter()
        .filter(|z| z.accident_count >= alpha)
        .map(|z| z.accident_intervals)
        .sum();
    let total_after = retained.len() * intervals_per_zone;
    let report = SparseFilterReport {
        alpha,
        zones_before: stats.len(),
        zones_after: retained.len(),
        ratio_before: if total_before == 0 {
            0.0
        } else {
            hits_before as f64 / total_before as f64
        },
        ratio_after: if total_after == 0 {
            0.0
        } else {
            hits_after as f64 / total_after as f64
        },
    };
    Ok((retained, report))
}
