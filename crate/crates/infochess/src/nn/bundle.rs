//! Binary tensor bundle: a JSON manifest followed by raw little-endian f32 data.
//!
//! Layout: the 4-byte magic `ICHM`, a little-endian `u32` manifest length, the
//! manifest JSON, then every tensor's values in manifest order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::transformer::TensorSpec;

const MAGIC: &[u8; 4] = b"ICHM";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// What the bundle holds, e.g. `belief-model` or `rl-policy`.
    pub kind: String,
    pub engine_version: String,
    pub tensors: Vec<TensorSpec>,
    /// Kind-specific metadata.
    #[serde(default)]
    pub meta: serde_json::Value,
}

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a model bundle (bad magic)")]
    Magic,
    #[error("invalid manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("expected a {expected} bundle, found {found}")]
    Kind { expected: String, found: String },
    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    Shape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("tensor list mismatch: expected {expected} tensors, found {found}")]
    TensorCount { expected: usize, found: usize },
    #[error("bundle holds non-finite parameters")]
    NonFinite,
}

pub fn write_bundle<W: Write>(mut w: W, manifest: &Manifest, data: &[f32]) -> Result<(), BundleError> {
    let json = serde_json::to_vec(manifest)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Reads a bundle of the given kind; the tensor data length follows the manifest.
pub fn read_bundle<R: Read>(mut r: R, kind: &str) -> Result<(Manifest, Vec<f32>), BundleError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(BundleError::Magic);
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let manifest: Manifest = serde_json::from_slice(&json)?;
    if manifest.kind != kind {
        return Err(BundleError::Kind { expected: kind.into(), found: manifest.kind });
    }
    let total: usize = manifest.tensors.iter().map(TensorSpec::numel).sum();
    let mut bytes = vec![0u8; total * 4];
    r.read_exact(&mut bytes)?;
    let data: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(BundleError::NonFinite);
    }
    Ok((manifest, data))
}

/// Checks that a loaded manifest lists exactly the expected tensors.
pub fn check_shapes(expected: &[TensorSpec], found: &[TensorSpec]) -> Result<(), BundleError> {
    if expected.len() != found.len() {
        return Err(BundleError::TensorCount { expected: expected.len(), found: found.len() });
    }
    for (e, f) in expected.iter().zip(found) {
        if e.name != f.name || e.shape != f.shape || e.offset != f.offset {
            return Err(BundleError::Shape { name: e.name.clone(), expected: e.shape.clone(), found: f.shape.clone() });
        }
    }
    Ok(())
}
