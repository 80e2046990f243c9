//! Dataset manifests: a JSON description of sample files and labels.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::format::{read_sample, write_sample};
use crate::error::{Error, Result};
use crate::model::NodeSignalTensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    /// Relative to the manifest directory unless absolute.
    pub path: PathBuf,
    pub label: usize,
    pub subject_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    #[serde(rename = "N")]
    pub nodes: usize,
    /// Nominal series length; samples may differ when absent.
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub timepoints: Option<usize>,
    #[serde(rename = "C")]
    pub channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tr_seconds: Option<f64>,
    pub samples: Vec<SampleEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub signal: NodeSignalTensor,
    pub label: usize,
    pub subject_id: String,
}

/// Samples in manifest order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn nodes(&self) -> usize {
        self.samples.first().map_or(0, |s| s.signal.nodes())
    }

    pub fn channels(&self) -> usize {
        self.samples.first().map_or(0, |s| s.signal.channels())
    }

    /// The samples at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset { name: self.name.clone(), samples: idx.iter().map(|&i| self.samples[i].clone()).collect() }
    }

    /// Checks the shared-shape and binary-label invariants.
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.samples.first() else {
            return Err(Error::Contract(format!("dataset '{}' is empty", self.name)));
        };
        let (n, c) = (first.signal.nodes(), first.signal.channels());
        for (i, s) in self.samples.iter().enumerate() {
            if s.signal.nodes() != n || s.signal.channels() != c {
                return Err(Error::Consistency(format!(
                    "sample {i} has N={}, C={} but sample 0 has N={n}, C={c}",
                    s.signal.nodes(),
                    s.signal.channels()
                )));
            }
            if s.label > 1 {
                return Err(Error::Consistency(format!("sample {i} has non-binary label {}", s.label)));
            }
        }
        Ok(())
    }
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Loads every sample listed in the manifest, in manifest order.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let m = read_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let samples = m
        .samples
        .par_iter()
        .map(|entry| {
            if entry.label > 1 {
                return Err(Error::Consistency(format!(
                    "{}: label {} is not binary",
                    entry.path.display(),
                    entry.label
                )));
            }
            let path = dir.join(&entry.path);
            let mut signal = read_sample(&path)?;
            let (n, t, c) = (signal.nodes(), signal.timepoints(), signal.channels());
            if n != m.nodes || c != m.channels || m.timepoints.is_some_and(|mt| mt != t) {
                return Err(Error::Consistency(format!(
                    "{}: header has N={n}, T={t}, C={c} but the manifest says N={}, T={}, C={}",
                    path.display(),
                    m.nodes,
                    m.timepoints.map_or_else(|| "any".to_string(), |t| t.to_string()),
                    m.channels
                )));
            }
            signal.tr_seconds = m.tr_seconds;
            Ok(Sample { signal, label: entry.label, subject_id: entry.subject_id.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { name: m.name, samples })
}

/// Writes one sample file per sample into `dir` and the manifest last.
/// Returns the manifest path.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<PathBuf> {
    dataset.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let width = dataset.len().to_string().len().max(4);
    let entries = dataset
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let rel = PathBuf::from(format!("sample_{i:0width$}.dstg"));
            write_sample(&dir.join(&rel), &s.signal)?;
            Ok(SampleEntry { path: rel, label: s.label, subject_id: s.subject_id.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    let first = &dataset.samples[0].signal;
    let t = first.timepoints();
    let uniform_t = dataset.samples.iter().all(|s| s.signal.timepoints() == t);
    let manifest = DatasetManifest {
        name: dataset.name.clone(),
        nodes: first.nodes(),
        timepoints: uniform_t.then_some(t),
        channels: first.channels(),
        tr_seconds: first.tr_seconds,
        samples: entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json("manifest", e))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
