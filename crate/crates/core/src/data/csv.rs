//! Plain CSV for dense matrices.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// One row per line, comma separated, shortest round-trip formatting.
pub fn matrix_to_csv(m: &Tensor) -> Result<String> {
    let [r, c] = m.dims2()?;
    let mut s = String::new();
    for i in 0..r {
        for j in 0..c {
            if j > 0 {
                s.push(',');
            }
            write!(s, "{}", m.data()[i * c + j]).expect("string write");
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn write_matrix_csv(path: &Path, m: &Tensor) -> Result<()> {
    fs::write(path, matrix_to_csv(m)?).map_err(|e| Error::io(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<Tensor> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |reason: String| Error::CorruptFile { path: path.to_path_buf(), reason };
    let rows = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| corrupt(format!("line {}: {e}", i + 1))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_rows(&rows).map_err(|e| corrupt(e.to_string()))
}
