//! The `DSTG` sample file.
//!
//! A 16-byte header (`"DSTG"`, then `u32` N, T, C little-endian) followed by
//! `N·T·C` little-endian `f32` values, node-major then time then channel.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::NodeSignalTensor;
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"DSTG";
pub const HEADER_LEN: usize = 16;

/// Serialises a sample; values are narrowed to `f32`.
pub fn encode(x: &NodeSignalTensor) -> Result<Vec<u8>> {
    let dims = [x.nodes(), x.timepoints(), x.channels()];
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * x.tensor().len());
    out.extend_from_slice(MAGIC);
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Contract(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in x.tensor().data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Parses a sample; `path` is used for diagnostics only.
pub fn decode(bytes: &[u8], path: &Path) -> Result<NodeSignalTensor> {
    let corrupt = |reason: String| Error::CorruptFile { path: path.to_path_buf(), reason };
    if bytes.len() < HEADER_LEN {
        return Err(corrupt(format!("{} bytes is shorter than the 16-byte header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt(format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..4]))));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
    let (n, t, c) = (dim(0), dim(1), dim(2));
    let expected = n.checked_mul(t).and_then(|v| v.checked_mul(c)).and_then(|v| v.checked_mul(4));
    let payload = &bytes[HEADER_LEN..];
    if expected != Some(payload.len()) {
        return Err(corrupt(format!(
            "header [{n}, {t}, {c}] implies {} payload bytes, found {}",
            expected.map_or_else(|| "too many".to_string(), |e| e.to_string()),
            payload.len()
        )));
    }
    let data = payload.chunks_exact(4).map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes")))).collect();
    let tensor = Tensor::new([n, t, c], data)?;
    NodeSignalTensor::new(tensor, None).map_err(|e| corrupt(e.to_string()))
}

pub fn write_sample(path: &Path, x: &NodeSignalTensor) -> Result<()> {
    fs::write(path, encode(x)?).map_err(|e| Error::io(path, e))
}

pub fn read_sample(path: &Path) -> Result<NodeSignalTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
