use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor};

/// `−ln(max(probs[label], 1e-12))` for one probability vector.
pub fn cross_entropy_loss(probs: &Tensor, label: usize) -> Result<f64> {
    if probs.rank() != 1 {
        return Err(Error::Dimension(format!("expected a probability vector, got shape {:?}", probs.shape())));
    }
    let mut tape = Tape::new();
    let p = tape.constant(probs.clone().reshape([1, probs.len()])?);
    let loss = tape.nll(p, &[label])?;
    Ok(tape.value(loss).item())
}
