//! On-disk container for matrices.
//!
//! A container is two files: the payload at `path`, holding row-major
//! little-endian values (`u64` or `f64`), and a JSON sidecar at
//! `path.json` declaring the shape, element type, SHA-256 of the payload
//! and kind-specific metadata.
//!
//! ```json
//! {
//!   "format": "deimsense-container",
//!   "version": 1,
//!   "kind": "activity",
//!   "dtype": "u64",
//!   "rows": 200,
//!   "cols": 60,
//!   "sha256": "…",
//!   "meta": { … }
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::{ActivityMatrix, ActivityMeta};

pub const FORMAT_NAME: &str = "deimsense-container";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Activity,
    Basis,
    Reconstruction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U64,
    F64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar<M> {
    format: String,
    version: u32,
    kind: Kind,
    dtype: Dtype,
    rows: usize,
    cols: usize,
    sha256: String,
    meta: M,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn write<M: Serialize>(
    path: &Path,
    kind: Kind,
    dtype: Dtype,
    rows: usize,
    cols: usize,
    payload: &[u8],
    meta: &M,
) -> Result<()> {
    debug_assert_eq!(payload.len(), rows * cols * 8);
    let sidecar = Sidecar {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        kind,
        dtype,
        rows,
        cols,
        sha256: digest(payload),
        meta,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, payload).map_err(|e| Error::io(path, e))?;
    let json = serde_json::to_vec_pretty(&sidecar).map_err(|e| Error::format(e.to_string()))?;
    let side = sidecar_path(path);
    fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
    Ok(())
}

pub(crate) struct Loaded<M> {
    pub rows: usize,
    pub cols: usize,
    pub payload: Vec<u8>,
    pub meta: M,
}

pub(crate) fn read<M: DeserializeOwned>(
    path: &Path,
    kind: Kind,
    dtype: Dtype,
) -> Result<Loaded<M>> {
    let side = sidecar_path(path);
    let text = fs::read(&side).map_err(|e| Error::io(&side, e))?;
    let header: Sidecar<serde_json::Value> = serde_json::from_slice(&text)
        .map_err(|e| Error::format(format!("{}: {e}", side.display())))?;
    if header.format != FORMAT_NAME {
        return Err(Error::format(format!(
            "unknown container format '{}'",
            header.format
        )));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "container version {} not supported (expected {FORMAT_VERSION})",
            header.version
        )));
    }
    if header.kind != kind {
        return Err(Error::format(format!(
            "expected a {kind:?} container, found {:?}",
            header.kind
        )));
    }
    if header.dtype != dtype {
        return Err(Error::format(format!(
            "expected {dtype:?} payload, found {:?}",
            header.dtype
        )));
    }
    let payload = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = header
        .rows
        .checked_mul(header.cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format("declared shape overflows"))?;
    if payload.len() != expected {
        return Err(Error::format(format!(
            "payload is {} bytes, declared {}x{} needs {expected}",
            payload.len(),
            header.rows,
            header.cols
        )));
    }
    if digest(&payload) != header.sha256 {
        return Err(Error::format("payload checksum mismatch"));
    }
    let meta = serde_json::from_value(header.meta).map_err(|e| Error::format(e.to_string()))?;
    Ok(Loaded {
        rows: header.rows,
        cols: header.cols,
        payload,
        meta,
    })
}

pub(crate) fn encode_u64(values: &[u64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn decode_u64(bytes: &[u8]) -> Vec<u64> {
    bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect()
}

/// Row-major encoding of a column-major nalgebra matrix.
pub(crate) fn encode_f64(m: &nalgebra::DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(m.len() * 8);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub(crate) fn decode_f64(bytes: &[u8], rows: usize, cols: usize) -> nalgebra::DMatrix<f64> {
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    nalgebra::DMatrix::from_row_slice(rows, cols, &vals)
}

pub fn persist_matrix(matrix: &ActivityMatrix, path: &Path) -> Result<()> {
    write(
        path,
        Kind::Activity,
        Dtype::U64,
        matrix.num_cells(),
        matrix.num_units(),
        &encode_u64(matrix.values()),
        &matrix.meta(),
    )
}

pub fn load_matrix(path: &Path) -> Result<ActivityMatrix> {
    let loaded: Loaded<ActivityMeta> = read(path, Kind::Activity, Dtype::U64)?;
    let meta = loaded.meta;
    if loaded.rows != meta.grid.num_cells() || loaded.cols != meta.temporal.num_units {
        return Err(Error::format(format!(
            "declared {}x{} does not match grid ({} cells) x window ({} units)",
            loaded.rows,
            loaded.cols,
            meta.grid.num_cells(),
            meta.temporal.num_units
        )));
    }
    ActivityMatrix::from_meta(decode_u64(&loaded.payload), meta)
}
