//! Run manifests: every command records its configuration, seeds, and input
//! digests so equal manifests imply equal outputs.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub params: BTreeMap<String, serde_json::Value>,
    pub input_digests: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            params: BTreeMap::new(),
            input_digests: BTreeMap::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.params.insert(
            key.to_string(),
            serde_json::to_value(value).expect("manifest params serialize"),
        );
        self
    }

    pub fn digest_input(&mut self, name: &str, path: &Path) -> std::io::Result<&mut Self> {
        self.input_digests
            .insert(name.to_string(), fnv64_file(path)?);
        Ok(self)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json)
    }
}

/// FNV-1a over a file's bytes; a cheap content fingerprint for manifests,
/// not a cryptographic hash.
pub fn fnv64_file(path: &Path) -> std::io::Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut buf = [0u8; 64 * 1024];
    let mut h: u64 = 0xcbf29ce484222325;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        for &b in &buf[..n] {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    Ok(format!("{h:016x}"))
}

pub fn fnv64_bytes(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}
