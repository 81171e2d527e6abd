//! Single-file dataset archive.
//!
//! Layout: the 8-byte magic, a little-endian `u64` header length, a JSON
//! header `{"num_classes", "shape": [N, 3, L, S, S], "meta"}`, then `N·3·L·S·S`
//! little-endian `f32` pixels and `N` little-endian `u32` labels.

use std::fs;
use std::path::Path;

use ndarray::Array5;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{A3dError, Result};
use crate::fsutil::write_atomic;

pub const ARCHIVE_MAGIC: &[u8; 8] = b"A3DDATA1";

#[derive(Serialize, Deserialize)]
struct Header {
    num_classes: usize,
    shape: [usize; 5],
    meta: serde_json::Value,
}

pub fn write_archive(path: &Path, data: &Dataset, meta: serde_json::Value) -> Result<()> {
    let (n, c, t, h, w) = data.videos.dim();
    let header = serde_json::to_vec(&Header {
        num_classes: data.num_classes,
        shape: [n, c, t, h, w],
        meta,
    })?;
    let mut buf = Vec::with_capacity(16 + header.len() + data.videos.len() * 4 + n * 4);
    buf.extend_from_slice(ARCHIVE_MAGIC);
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for v in data.videos.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &l in &data.labels {
        buf.extend_from_slice(&(l as u32).to_le_bytes());
    }
    write_atomic(path, &buf)
}

/// Reads an archive; returns the dataset and the stored metadata.
pub fn read_archive(path: &Path) -> Result<(Dataset, serde_json::Value)> {
    let bytes = fs::read(path)?;
    let bad = |m: &str| A3dError::Format(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != ARCHIVE_MAGIC {
        return Err(bad("not a dataset archive"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[16..body])?;
    let count: usize = header.shape.iter().product();
    let n = header.shape[0];
    if bytes.len() != body + 4 * count + 4 * n {
        return Err(bad("payload size does not match the header"));
    }
    let pixels = bytes[body..body + 4 * count]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    let labels = bytes[body + 4 * count..]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
        .collect();
    let [a, b, c, d, e] = header.shape;
    let videos = Array5::from_shape_vec((a, b, c, d, e), pixels).map_err(|e| bad(&e.to_string()))?;
    Ok((Dataset::new(videos, labels, header.num_classes)?, header.meta))
}
