//! The tensor pack: the on-disk handoff between assembly and training.
//!
//! A pack directory holds `manifest.json`, `features.bin` (little-endian
//! 32-bit floats in (zone, interval, feature) order), and `labels.bin`
//! (one gamma-class byte per (zone, interval)).

use super::windows::ZoneSeries;
use super::{GridError, SparseFilterReport};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZoneInfo {
    pub zone_index: usize,
    pub row: usize,
    pub col: usize,
    pub center_lat: f64,
    pub center_lon: f64,
    pub accident_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PackManifest {
    pub tool_version: String,
    pub seed: u64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub edge_km: f64,
    pub epoch: String,
    pub interval_hours: i64,
    pub n_intervals: usize,
    /// first interval ordinal that belongs to the test period
    pub train_boundary_interval: usize,
    /// window length the pack was sized for; training configs may override
    pub default_w: usize,
    pub feature_dim: usize,
    pub feature_names: Vec<String>,
    pub condition_vocab: Vec<String>,
    pub accident_count_col: usize,
    pub category_masks: BTreeMap<String, Vec<usize>>,
    pub zones: Vec<ZoneInfo>,
    pub sparse_filter: SparseFilterReport,
    pub input_digests: BTreeMap<String, String>,
    /// resolved design toggles, encoding notes, aggregation choices
    pub notes: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct TensorPack {
    pub manifest: PackManifest,
    /// n_zones × n_intervals × f, f64 in memory, f32 on disk
    pub features: Vec<f64>,
    /// n_zones × n_intervals gamma classes
    pub gamma: Vec<u8>,
}

impl TensorPack {
    pub fn n_zones(&self) -> usize {
        self.manifest.zones.len()
    }

    pub fn f(&self) -> usize {
        self.manifest.feature_dim
    }

    pub fn n_intervals(&self) -> usize {
        self.manifest.n_intervals
    }

    pub fn vector(&self, zone: usize, interval: usize) -> &[f64] {
        let f = self.f();
        let base = (zone * self.n_intervals() + interval) * f;
        &self.features[base..base + f]
    }

    pub fn gamma_class(&self, zone: usize, interval: usize) -> u8 {
        self.gamma[zone * self.n_intervals() + interval]
    }

    /// Extracts one zone's series, optionally zeroing masked-out columns
    /// (used by the ablation runs).
    pub fn zone_series(&self, zone: usize, keep: Option<&[bool]>) -> ZoneSeries {
        let f = self.f();
        let n = self.n_intervals();
        let acc_col = self.manifest.accident_count_col;
        let mut encoded = self.features[zone * n * f..(zone + 1) * n * f].to_vec();
        if let Some(keep) = keep {
            assert_eq!(keep.len(), f, "mask length matches feature dim");
            for row in encoded.chunks_mut(f) {
                for (v, &k) in row.iter_mut().zip(keep.iter()) {
                    if !k {
                        *v = 0.0;
                    }
                }
            }
        }
        let gamma = self.gamma[zone * n..(zone + 1) * n].to_vec();
        // the accident flag reads the unmasked features so ablation never
        // corrupts the labels
        let accident: Vec<bool> = (0..n)
            .map(|i| self.features[(zone * n + i) * f + acc_col] > 0.0)
            .collect();
        ZoneSeries {
            zone_index: zone,
            f,
            encoded,
            gamma,
            accident,
        }
    }

    pub fn all_series(&self, keep: Option<&[bool]>) -> Vec<ZoneSeries> {
        (0..self.n_zones()).map(|z| self.zone_series(z, keep)).collect()
    }

    /// A copy cut down to the first `n_intervals` intervals with a new train
    /// boundary; grid search uses this to validate inside the train period
    /// without touching the real test range.
    pub fn truncated(&self, n_intervals: usize, boundary: usize) -> TensorPack {
        assert!(n_intervals <= self.n_intervals());
        assert!(boundary <= n_intervals);
        let f = self.f();
        let full = self.n_intervals();
        let mut features = Vec::with_capacity(self.n_zones() * n_intervals * f);
        let mut gamma = Vec::with_capacity(self.n_zones() * n_intervals);
        for z in 0..self.n_zones() {
            features.extend_from_slice(&self.features[z * full * f..(z * full + n_intervals) * f]);
            gamma.extend_from_slice(&self.gamma[z * full..z * full + n_intervals]);
        }
        let mut manifest = self.manifest.clone();
        manifest.n_intervals = n_intervals;
        manifest.train_boundary_interval = boundary;
        TensorPack {
            manifest,
            features,
            gamma,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), GridError> {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| GridError::Pack(e.to_string()))?;
        fs::write(dir.join("manifest.json"), json)?;
        let mut buf = Vec::with_capacity(self.features.len() * 4);
        for v in &self.features {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        fs::File::create(dir.join("features.bin"))?.write_all(&buf)?;
        fs::File::create(dir.join("labels.bin"))?.write_all(&self.gamma)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, GridError> {
        let json = fs::read_to_string(dir.join("manifest.json"))
            .map_err(|_| GridError::Pack(format!("missing manifest in {}", dir.display())))?;
        let manifest: PackManifest =
            serde_json::from_str(&json).map_err(|e| GridError::Pack(e.to_string()))?;
        let mut bytes = Vec::new();
        fs::File::open(dir.join("features.bin"))?.read_to_end(&mut bytes)?;
        let expected =
            manifest.zones.len() * manifest.n_intervals * manifest.feature_dim * 4;
        if bytes.len() != expected {
            return Err(GridError::Pack(format!(
                "features.bin holds {} bytes, manifest expects {expected}",
                bytes.len()
            )));
        }
        let features: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let mut gamma = Vec::new();
        fs::File::open(dir.join("labels.bin"))?.read_to_end(&mut gamma)?;
        if gamma.len() != manifest.zones.len() * manifest.n_intervals {
            return Err(GridError::Pack(format!(
                "labels.bin holds {} entries, manifest expects {}",
                gamma.len(),
                manifest.zones.len() * manifest.n_intervals
            )));
        }
        Ok(TensorPack {
            manifest,
            features,
            gamma,
        })
    }
}
