//! Weight bundle serialization: a JSON manifest naming each tensor and its
//! shape, next to one binary file of concatenated little-endian f64 values in
//! manifest order.

use crate::tensor::Tensor;
use crate::{NnError, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
pub struct WeightManifest {
    pub dtype: String,
    pub entries: Vec<WeightEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WeightEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

pub fn save_weights(
    manifest_path: &Path,
    bin_path: &Path,
    tensors: &[(String, &Tensor)],
) -> Result<()> {
    let manifest = WeightManifest {
        dtype: "f64le".to_string(),
        entries: tensors
            .iter()
            .map(|(name, t)| WeightEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| NnError::Manifest(e.to_string()))?;
    fs::write(manifest_path, json)?;
    let mut f = fs::File::create(bin_path)?;
    let mut buf = Vec::new();
    for (_, t) in tensors {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_weights(manifest_path: &Path, bin_path: &Path) -> Result<Vec<(String, Tensor)>> {
    let json = fs::read_to_string(manifest_path)?;
    let manifest: WeightManifest =
        serde_json::from_str(&json).map_err(|e| NnError::Manifest(e.to_string()))?;
    if manifest.dtype != "f64le" {
        return Err(NnError::Manifest(format!(
            "unsupported dtype {}",
            manifest.dtype
        )));
    }
    let mut bytes = Vec::new();
    fs::File::open(bin_path)?.read_to_end(&mut bytes)?;
    let expected: usize = manifest
        .entries
        .iter()
        .map(|e| e.shape.iter().product::<usize>())
        .sum();
    if bytes.len() != expected * 8 {
        return Err(NnError::Manifest(format!(
            "weight file holds {} bytes, manifest expects {}",
            bytes.len(),
            expected * 8
        )));
    }
    let mut out = Vec::with_capacity(manifest.entries.len());
    let mut off = 0usize;
    for entry in manifest.entries {
        let n: usize = entry.shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let mut arr = [0u8; 8];
            arr.copy_from_slice(&bytes[off..off + 8]);
            data.push(f64::from_le_bytes(arr));
            off += 8;
        }
        out.push((entry.name, Tensor::from_vec(&entry.shape, data)?));
    }
    Ok(out)
}
