//! Field snapshots: raw little-endian `f64` values in row-major order plus a
//! JSON sidecar with the grid metadata.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, Scheme};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub dim: usize,
    pub n: usize,
    pub box_length: f64,
    pub t: f64,
    pub field_name: String,
    #[serde(rename = "P")]
    pub p: u32,
}

pub fn encode_values(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_values(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidArgument(format!(
            "snapshot length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Writes `<dir>/<name>.bin` and `<dir>/<name>.json`; returns the `.bin` path.
pub fn write_snapshot(dir: &Path, name: &str, field: &ScalarField, t: f64, p: u32) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let spec = field.grid();
    let meta = SnapshotMeta {
        dim: spec.dim,
        n: spec.n,
        box_length: spec.box_length,
        t,
        field_name: name.to_string(),
        p,
    };
    let bin = dir.join(format!("{name}.bin"));
    fs::write(&bin, encode_values(field.values()))?;
    fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(&meta)?)?;
    Ok(bin)
}

/// Reads a snapshot written by [`write_snapshot`]. The scheme is not part of
/// the sidecar, so the caller supplies it.
pub fn read_snapshot(bin: &Path, scheme: Scheme) -> Result<(ScalarField, SnapshotMeta)> {
    let meta: SnapshotMeta = serde_json::from_str(&fs::read_to_string(bin.with_extension("json"))?)?;
    let values = decode_values(&fs::read(bin)?)?;
    let spec = GridSpec::new(meta.dim, meta.n, meta.box_length, scheme)?;
    Ok((ScalarField::new(spec, values)?, meta))
}
