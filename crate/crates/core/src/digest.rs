//! SHA-256 digests used for provenance records.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::raster::RasterStack;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Digest of the compact JSON encoding of `value`.
pub fn json_digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("plain data serializes");
    sha256_hex(&bytes)
}

/// Digest over shape, dates, channel names, georeference and every value's
/// bit pattern (NoData cells hash as NaN).
pub fn stack_digest(stack: &RasterStack) -> String {
    let mut h = Sha256::new();
    let (t, c, rows, cols) = stack.data().dim();
    for d in [t, c, rows, cols] {
        h.update((d as u64).to_le_bytes());
    }
    for date in stack.dates() {
        h.update(date.to_string().as_bytes());
    }
    for name in stack.channels() {
        h.update(name.as_bytes());
        h.update([0]);
    }
    for v in stack.georef().transform {
        h.update(v.to_le_bytes());
    }
    h.update(stack.georef().epsg.to_le_bytes());
    for v in stack.data() {
        let v = if v.is_nan() { f64::NAN } else { *v };
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}
