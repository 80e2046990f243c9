use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// A graph signal `X ∈ R^{N×T×C}`: node-major time series with channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSignalTensor {
    data: Tensor,
    /// Sampling interval in seconds, when known.
    pub tr_seconds: Option<f64>,
}

impl NodeSignalTensor {
    pub fn new(data: Tensor, tr_seconds: Option<f64>) -> Result<Self> {
        let &[n, t, c] = data.shape() else {
            return Err(Error::Dimension(format!("signal must be N×T×C, got shape {:?}", data.shape())));
        };
        if n < 2 {
            return Err(Error::Dimension(format!("signal needs at least 2 nodes, got {n}")));
        }
        if t < 1 || c < 1 {
            return Err(Error::Dimension(format!("signal has an empty axis: {:?}", data.shape())));
        }
        if !data.all_finite() {
            return Err(Error::Contract("signal contains NaN or infinite values".into()));
        }
        Ok(NodeSignalTensor { data: data.with_grad(false), tr_seconds })
    }

    /// Single-channel signal from per-node series.
    pub fn from_series(series: &[Vec<f64>]) -> Result<Self> {
        let t = series.first().map_or(0, Vec::len);
        if series.iter().any(|s| s.len() != t) {
            return Err(Error::Dimension("node series differ in length".into()));
        }
        let data = Tensor::new([series.len(), t, 1], series.concat())?;
        Self::new(data, None)
    }

    pub fn nodes(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn timepoints(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    /// Series of node `i`, channel `c`.
    pub fn series(&self, i: usize, c: usize) -> Vec<f64> {
        let (t, ch) = (self.timepoints(), self.channels());
        let base = i * t * ch;
        (0..t).map(|k| self.data.data()[base + k * ch + c]).collect()
    }
}
