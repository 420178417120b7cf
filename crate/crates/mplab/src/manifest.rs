//! Run manifests: every command records its inputs and output digests so
//! a run can be reproduced and checked byte for byte.

use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

/// FNV-1a 64-bit digest, hex encoded. Stable across platforms; used for
/// reproducibility checks, not integrity.
pub fn fnv1a64_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub grids: BTreeMap<String, Vec<u64>>,
    /// Digest of every output file, keyed by file name.
    pub outputs: BTreeMap<String, String>,
    /// Digest over the deterministic fields above; identical re-runs
    /// produce identical values (wall clock excluded).
    pub content_digest: String,
    pub wall_clock_unix: u64,
}

impl RunManifest {
    pub fn new(command: Vec<String>) -> Self {
        RunManifest {
            tool: "mplab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            schedule: None,
            seeds: None,
            rng_seed: None,
            grids: BTreeMap::new(),
            outputs: BTreeMap::new(),
            content_digest: String::new(),
            wall_clock_unix: 0,
        }
    }

    pub fn record_output(&mut self, name: &str, bytes: &[u8]) {
        self.outputs.insert(name.to_string(), fnv1a64_hex(bytes));
    }

    /// Digest of the deterministic content (everything but the clock).
    pub fn compute_content_digest(&self) -> String {
        let mut canon = String::new();
        canon.push_str(&self.tool);
        canon.push('\n');
        canon.push_str(&self.version);
        canon.push('\n');
        canon.push_str(&self.command.join("\u{1f}"));
        canon.push('\n');
        if let Some(s) = &self.schedule {
            canon.push_str(s);
        }
        canon.push('\n');
        if let Some(s) = &self.seeds {
            canon.push_str(s);
        }
        canon.push('\n');
        if let Some(s) = self.rng_seed {
            canon.push_str(&s.to_string());
        }
        canon.push('\n');
        for (k, v) in &self.grids {
            canon.push_str(k);
            canon.push('=');
            for x in v {
                canon.push_str(&x.to_string());
                canon.push(',');
            }
            canon.push(';');
        }
        canon.push('\n');
        for (k, v) in &self.outputs {
            canon.push_str(k);
            canon.push(':');
            canon.push_str(v);
            canon.push(';');
        }
        fnv1a64_hex(canon.as_bytes())
    }

    /// Finalizes the digest and timestamp and writes `<stem>.manifest.json`.
    pub fn write(mut self, out_dir: &Path, stem: &str) -> anyhow::Result<String> {
        self.content_digest = self.compute_content_digest();
        self.wall_clock_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let path = out_dir.join(format!("{stem}.manifest.json"));
        fs::write(&path, serde_json::to_vec_pretty(&self)?)?;
        Ok(self.content_digest)
    }
}

/// Writes a file and records its digest in the manifest.
pub fn write_output(
    manifest: &mut RunManifest,
    out_dir: &Path,
    name: &str,
    bytes: &[u8],
) -> anyhow::Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(name), bytes)?;
    manifest.record_output(name, bytes);
    Ok(())
}
