use super::config::ModelConfig;
use super::graph;
use super::params::ModelParams;
use super::signal::NodeSignalTensor;
use crate::error::{Error, Result};
use crate::numerics::{finite_diff_check_with, GradCheckReport, Stencil, Tape};
use crate::rng::substream;

/// Step of the five-point stencil used for whole-model checks.
pub const MODEL_CHECK_EPS: f64 = 1e-3;

/// Checks the gradient of the mean cross-entropy of `samples` with respect
/// to every trainable tensor against central differences.
///
/// The numeric derivative uses the five-point central stencil with step
/// [`MODEL_CHECK_EPS`]. Dropout runs in training mode with a mask stream reseeded on every
/// evaluation, so all probes see the same mask.
pub fn model_grad_check(
    config: &ModelConfig,
    params: &ModelParams,
    samples: &[&NodeSignalTensor],
    labels: &[usize],
    seed: u64,
) -> Result<GradCheckReport> {
    if samples.len() != labels.len() {
        return Err(Error::Contract(format!("{} samples but {} labels", samples.len(), labels.len())));
    }
    let input = graph::stack_inputs(samples, config)?;
    let mut names = Vec::new();
    let mut leaves = Vec::new();
    params.tensors.visit(|name, t| {
        if !(params.frozen_factors && super::is_factor_name(name)) {
            names.push(name.to_string());
            leaves.push(t.clone());
        }
    });
    let f = |tape: &mut Tape, vars: &[crate::numerics::Var]| {
        let mut it = vars.iter();
        let bound = params.tensors.map(|name, t| {
            if params.frozen_factors && super::is_factor_name(name) {
                tape.constant(t.clone())
            } else {
                *it.next().expect("one var per trainable tensor")
            }
        });
        let mut rng = substream(seed, "gradcheck.dropout");
        let fwd = graph::forward(tape, &bound, config, input.clone(), Some(&mut rng))?;
        tape.nll(fwd.probs, labels)
    };
    finite_diff_check_with(f, &leaves, MODEL_CHECK_EPS, Stencil::FivePoint)
}

/// Smallest `|E_s · E_t|` entry over all learned graphs; `+∞` without factors.
///
/// Finite differences are only meaningful when no probe crosses the relu
/// kink, so check instances should keep this well above the probe span.
pub fn score_margin(params: &ModelParams) -> f64 {
    params
        .factors()
        .iter()
        .flat_map(|f| {
            let (es, et) = (&f.source, f.target_matrix());
            let (n, d) = (f.nodes(), f.embed_dim());
            (0..n * n).map(move |ij| {
                let (i, j) = (ij / n, ij % n);
                (0..d).map(|k| es.get(&[i, k]) * et.get(&[k, j])).sum::<f64>().abs()
            })
        })
        .fold(f64::INFINITY, f64::min)
}
