//! The `DGCP` checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "DGCP" | u32 version | u8 kind | u32 len + JSON config block
//! u32 record count | per record: u32 name len, name, u32 rank, rank × u64 dims, f64 values
//! ```

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"DGCP";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ContainerKind {
    Model = 0,
    GraphBundle = 1,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: ContainerKind,
    pub config: serde_json::Value,
    pub records: Vec<(String, Tensor)>,
}

impl Container {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind as u8);
        let cfg = serde_json::to_vec(&self.config).map_err(|e| Error::json("checkpoint config", e))?;
        out.extend_from_slice(&len_u32(cfg.len())?.to_le_bytes());
        out.extend_from_slice(&cfg);
        out.extend_from_slice(&len_u32(self.records.len())?.to_le_bytes());
        for (name, t) in &self.records {
            out.extend_from_slice(&len_u32(name.len())?.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&len_u32(t.rank())?.to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |reason: String| Error::CorruptFile { path: path.to_path_buf(), reason };
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic).map_err(corrupt)?;
        if &magic != MAGIC {
            return Err(corrupt(format!("bad magic {:?}", String::from_utf8_lossy(&magic))));
        }
        let version = read_u32(&mut r).map_err(corrupt)?;
        if version != VERSION {
            return Err(corrupt(format!("unsupported format version {version}")));
        }
        let mut kind = [0u8; 1];
        read_exact(&mut r, &mut kind).map_err(corrupt)?;
        let kind = match kind[0] {
            0 => ContainerKind::Model,
            1 => ContainerKind::GraphBundle,
            k => return Err(corrupt(format!("unknown container kind {k}"))),
        };
        let cfg_len = read_u32(&mut r).map_err(corrupt)? as usize;
        let cfg = read_vec(&mut r, cfg_len).map_err(corrupt)?;
        let config = serde_json::from_slice(&cfg).map_err(|e| corrupt(format!("config block: {e}")))?;
        let count = read_u32(&mut r).map_err(corrupt)?;
        let mut records = Vec::new();
        for _ in 0..count {
            let name_len = read_u32(&mut r).map_err(corrupt)? as usize;
            let name = String::from_utf8(read_vec(&mut r, name_len).map_err(corrupt)?)
                .map_err(|_| corrupt("record name is not UTF-8".into()))?;
            let rank = read_u32(&mut r).map_err(corrupt)? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                let mut b = [0u8; 8];
                read_exact(&mut r, &mut b).map_err(corrupt)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let remaining = bytes.len() - r.position() as usize;
            let n = match n {
                Some(n) if n.checked_mul(8).is_some_and(|b| b <= remaining) => n,
                _ => return Err(corrupt(format!("record '{name}' with shape {shape:?} overruns the file"))),
            };
            let raw = read_vec(&mut r, n * 8).map_err(corrupt)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            records.push((name, Tensor::new(shape, data)?));
        }
        if (r.position() as usize) != bytes.len() {
            return Err(corrupt("trailing bytes after the last record".into()));
        }
        Ok(Container { kind, config, records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn record(&self, name: &str) -> Option<&Tensor> {
        self.records.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Contract(format!("length {n} does not fit the container format")))
}

fn read_exact(r: &mut Cursor<&[u8]>, buf: &mut [u8]) -> std::result::Result<(), String> {
    r.read_exact(buf).map_err(|_| "unexpected end of file".to_string())
}

fn read_u32(r: &mut Cursor<&[u8]>) -> std::result::Result<u32, String> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_vec(r: &mut Cursor<&[u8]>, n: usize) -> std::result::Result<Vec<u8>, String> {
    let remaining = r.get_ref().len() - r.position() as usize;
    if n > remaining {
        return Err("unexpected end of file".into());
    }
    let mut v = vec![0u8; n];
    read_exact(r, &mut v)?;
    Ok(v)
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    model: ModelConfig,
    frozen_factors: bool,
}

const FIXED_ADJACENCY: &str = "fixed_adjacency";

/// Serialises a model checkpoint.
pub fn model_container(config: &ModelConfig, params: &ModelParams) -> Result<Container> {
    let header = ModelHeader { model: config.clone(), frozen_factors: params.frozen_factors };
    let config_json = serde_json::to_value(&header).map_err(|e| Error::json("model config", e))?;
    let mut records = Vec::new();
    params.tensors.visit(|name, t| records.push((name.to_string(), t.clone().with_grad(false))));
    if let Some(a) = &config.fixed_adjacency {
        records.push((FIXED_ADJACENCY.to_string(), a.clone()));
    }
    Ok(Container { kind: ContainerKind::Model, config: config_json, records })
}

pub fn save_model(path: &Path, config: &ModelConfig, params: &ModelParams) -> Result<()> {
    model_container(config, params)?.write(path)
}

pub fn load_model(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    let c = Container::read(path)?;
    if c.kind != ContainerKind::Model {
        return Err(Error::CorruptFile { path: path.to_path_buf(), reason: "not a model checkpoint".into() });
    }
    let header: ModelHeader =
        serde_json::from_value(c.config.clone()).map_err(|e| Error::json(path.display().to_string(), e))?;
    let mut config = header.model;
    config.fixed_adjacency = c.record(FIXED_ADJACENCY).cloned();
    let mut params = ModelParams::template(&config)?;
    params.frozen_factors = header.frozen_factors;
    let mut missing = None;
    params.tensors.visit_mut(|name, slot| match c.record(name) {
        Some(t) if t.shape() == slot.shape() => *slot = t.clone(),
        _ => {
            missing.get_or_insert_with(|| name.to_string());
        }
    });
    if let Some(name) = missing {
        return Err(Error::CorruptFile {
            path: path.to_path_buf(),
            reason: format!("record '{name}' is missing or has the wrong shape"),
        });
    }
    Ok((config, params))
}
