//! Synthetic datasets with planted directed coupling.
//!
//! Each sample is a VAR(1) process `x[t+1] = A(t)·x[t] + σ·ε`. Class 0 uses
//! `A_base` throughout. Class 1 uses `A_true` under static coupling, or
//! alternates between `A_true` and `A_base` every `switch_period` steps
//! (starting in `A_true`) under switching coupling.
//!
//! Both planted matrices are single directed `N`-cycles, scaled to spectral
//! radius `0.95·effect_size`, whose successor differs at every node. A
//! scaled permutation is orthogonal, so the stationary covariance of either
//! regime is a multiple of the identity: the classes share their lag-0
//! correlation structure and differ only in directed lagged coupling.
//! A positive `self_coupling` adds `s·I` before rescaling, which correlates
//! each node with its successor at lag 0 and makes the classes separable
//! by static correlation.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, Schur};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::csv::write_matrix_csv;
use super::manifest::{write_dataset, Dataset, Sample};
use crate::error::{Error, Result};
use crate::model::NodeSignalTensor;
use crate::numerics::Tensor;
use crate::rng::{substream, StreamRng};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dynamics {
    #[default]
    StaticCoupling,
    SwitchingCoupling {
        switch_period: usize,
    },
}

fn default_name() -> String {
    "synthetic".into()
}

fn default_sigma() -> f64 {
    1.0
}

fn default_burn_in() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub nodes: usize,
    pub timepoints: usize,
    pub samples_per_class: usize,
    pub effect_size: f64,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    /// Weight `s` of each node's own past in `A ∝ s·I + P`. Zero keeps the
    /// two classes' zero-lag covariances identical.
    #[serde(default)]
    pub self_coupling: f64,
    #[serde(default)]
    pub dynamics: Dynamics,
    pub seed: u64,
    /// Seed of the planted matrices; defaults to `seed`. Datasets sharing a
    /// graph seed share `A_true` and `A_base`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tr_seconds: Option<f64>,
    /// Discarded warm-up steps before the recorded series.
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

impl SynthSpec {
    pub fn new(nodes: usize, timepoints: usize, samples_per_class: usize, effect_size: f64, seed: u64) -> Self {
        SynthSpec {
            name: default_name(),
            nodes,
            timepoints,
            samples_per_class,
            effect_size,
            noise_sigma: 1.0,
            self_coupling: 0.0,
            dynamics: Dynamics::StaticCoupling,
            seed,
            graph_seed: None,
            tr_seconds: None,
            burn_in: default_burn_in(),
        }
    }

    pub fn switching(mut self, switch_period: usize) -> Self {
        self.dynamics = Dynamics::SwitchingCoupling { switch_period };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Spec(m));
        if self.nodes < 3 {
            return fail(format!("need at least 3 nodes for two disjoint cycles, got {}", self.nodes));
        }
        if self.timepoints < 2 {
            return fail(format!("need at least 2 timepoints, got {}", self.timepoints));
        }
        if self.samples_per_class < 1 {
            return fail("samples_per_class must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.effect_size) {
            return fail(format!("effect_size must lie in [0, 1], got {}", self.effect_size));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("noise_sigma must be positive, got {}", self.noise_sigma));
        }
        if !(self.self_coupling >= 0.0 && self.self_coupling.is_finite()) {
            return fail(format!("self_coupling must be non-negative, got {}", self.self_coupling));
        }
        if let Dynamics::SwitchingCoupling { switch_period: 0 } = self.dynamics {
            return fail("switch_period must be positive".into());
        }
        Ok(())
    }
}

/// A generated dataset with its planted matrices.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub a_true: Tensor,
    pub a_base: Tensor,
    /// Spectral radius of each planted matrix after scaling.
    pub spectral_radius: f64,
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Tensor) -> Result<f64> {
    let [n, k] = m.dims2()?;
    if n != k {
        return Err(Error::Dimension(format!("spectral radius of a non-square {:?} matrix", m.shape())));
    }
    let dm = DMatrix::from_row_slice(n, n, m.data());
    match Schur::try_new(dm.clone(), f64::EPSILON, 10_000) {
        Some(schur) => Ok(schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)),
        None => Ok(gelfand_radius(dm)),
    }
}

/// `lim ‖A^(2^k)‖^(1/2^k)` by repeated squaring, rescaled at each step.
/// Used when the QR iteration stalls, as it does on permutation-like
/// matrices whose eigenvalues all share one modulus.
fn gelfand_radius(mut a: DMatrix<f64>) -> f64 {
    let mut log_scale = 0.0;
    let mut power = 1.0;
    for _ in 0..60 {
        let norm = a.norm();
        if norm == 0.0 {
            return 0.0;
        }
        a /= norm;
        log_scale += norm.ln() / power;
        a = &a * &a;
        power *= 2.0;
    }
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (log_scale + norm.ln() / power).exp()
}

/// Rejects matrices whose VAR(1) dynamics would not be stationary.
pub fn check_stable(m: &Tensor) -> Result<f64> {
    let r = spectral_radius(m)?;
    if r >= 1.0 {
        return Err(Error::Spec(format!("planted coupling is unstable: spectral radius {r:.6} >= 1")));
    }
    Ok(r)
}

/// Successor map of a uniformly random single `n`-cycle.
fn random_cycle(n: usize, rng: &mut StreamRng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut succ = vec![0; n];
    for a in 0..n {
        succ[order[a]] = order[(a + 1) % n];
    }
    succ
}

/// `gain·(s·I + P)` for the permutation `P` of `succ`.
fn cycle_matrix(succ: &[usize], self_coupling: f64, gain: f64) -> Tensor {
    let n = succ.len();
    let mut m = Tensor::zeros([n, n]);
    for (i, &j) in succ.iter().enumerate() {
        m.set(&[i, j], gain);
        m.set(&[i, i], gain * self_coupling);
    }
    m
}

/// Planted `(A_true, A_base)` for `nodes` under `graph_seed`: two
/// edge-disjoint random `N`-cycles, each plus `self_coupling` on the
/// diagonal, rescaled to spectral radius `0.95·effect_size`.
pub fn planted_pair(nodes: usize, effect_size: f64, self_coupling: f64, graph_seed: u64) -> Result<(Tensor, Tensor)> {
    let mut rng = substream(graph_seed, "synth.graph");
    let truth = random_cycle(nodes, &mut rng);
    let mut base = random_cycle(nodes, &mut rng);
    let mut attempts = 0;
    while base.iter().zip(&truth).any(|(a, b)| a == b) {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::Spec(format!("no pair of edge-disjoint {nodes}-cycles found")));
        }
        base = random_cycle(nodes, &mut rng);
    }
    let unit = cycle_matrix(&truth, self_coupling, 1.0);
    let gain = 0.95 * effect_size / spectral_radius(&unit)?;
    Ok((cycle_matrix(&truth, self_coupling, gain), cycle_matrix(&base, self_coupling, gain)))
}

fn step(a: &Tensor, x: &[f64], sigma: f64, rng: &mut StreamRng) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let drive: f64 = a.row(i).iter().zip(x).map(|(w, v)| w * v).sum();
            let e: f64 = StandardNormal.sample(rng);
            drive + sigma * e
        })
        .collect()
}

fn simulate(spec: &SynthSpec, label: usize, a_true: &Tensor, a_base: &Tensor, rng: &mut StreamRng) -> NodeSignalTensor {
    let (n, t) = (spec.nodes, spec.timepoints);
    let regime = |k: usize| -> &Tensor {
        match (label, spec.dynamics) {
            (0, _) => a_base,
            (_, Dynamics::StaticCoupling) => a_true,
            (_, Dynamics::SwitchingCoupling { switch_period }) => {
                if (k / switch_period).is_multiple_of(2) {
                    a_true
                } else {
                    a_base
                }
            }
        }
    };
    let mut x: Vec<f64> = (0..n).map(|_| spec.noise_sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    for _ in 0..spec.burn_in {
        x = step(regime(0), &x, spec.noise_sigma, rng);
    }
    let mut series = vec![0.0; n * t];
    for k in 0..t {
        x = step(regime(k), &x, spec.noise_sigma, rng);
        for i in 0..n {
            series[i * t + k] = x[i];
        }
    }
    let tensor = Tensor::new([n, t, 1], series).expect("sized");
    NodeSignalTensor::new(tensor, spec.tr_seconds).expect("stable process stays finite")
}

/// Generates the dataset in memory. Labels alternate `0, 1, 0, 1, ...`.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let (a_true, a_base) =
        planted_pair(spec.nodes, spec.effect_size, spec.self_coupling, spec.graph_seed.unwrap_or(spec.seed))?;
    let radius = check_stable(&a_true)?.max(check_stable(&a_base)?);
    let total = 2 * spec.samples_per_class;
    let samples = (0..total)
        .into_par_iter()
        .map(|i| {
            let label = i % 2;
            let mut rng = substream(spec.seed, &format!("synth.sample_{i}"));
            let signal = simulate(spec, label, &a_true, &a_base, &mut rng);
            Sample { signal, label, subject_id: format!("sub-{i:05}") }
        })
        .collect();
    let dataset = Dataset { name: spec.name.clone(), samples };
    Ok(SynthOutput { dataset, a_true, a_base, spectral_radius: radius })
}

/// Paths written by [`synth_generate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroundTruth {
    pub manifest: PathBuf,
    pub a_true_csv: PathBuf,
    pub a_base_csv: PathBuf,
    pub spec_json: PathBuf,
    pub spectral_radius: f64,
}

/// Generates a dataset into `dir`, with the planted matrices as CSV and the
/// resolved spec as JSON alongside the manifest.
pub fn synth_generate(spec: &SynthSpec, dir: &Path) -> Result<GroundTruth> {
    let out = generate(spec)?;
    let manifest = write_dataset(dir, &out.dataset)?;
    let a_true_csv = dir.join("a_true.csv");
    let a_base_csv = dir.join("a_base.csv");
    write_matrix_csv(&a_true_csv, &out.a_true)?;
    write_matrix_csv(&a_base_csv, &out.a_base)?;
    let spec_json = dir.join("synth_spec.json");
    let text = serde_json::to_string_pretty(spec).map_err(|e| Error::json("synth spec", e))?;
    fs::write(&spec_json, text + "\n").map_err(|e| Error::io(&spec_json, e))?;
    Ok(GroundTruth { manifest, a_true_csv, a_base_csv, spec_json, spectral_radius: out.spectral_radius })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_cycles_are_disjoint_and_scaled() {
        let (t, b) = planted_pair(7, 0.8, 0.0, 3).unwrap();
        for i in 0..7 {
            let jt = (0..7).find(|&j| t.get(&[i, j]) != 0.0).unwrap();
            let jb = (0..7).find(|&j| b.get(&[i, j]) != 0.0).unwrap();
            assert_ne!(jt, jb);
        }
        assert!((spectral_radius(&t).unwrap() - 0.76).abs() < 1e-9);
        let (t, _) = planted_pair(7, 0.8, 1.0, 3).unwrap();
        assert!((spectral_radius(&t).unwrap() - 0.76).abs() < 1e-9);
        assert!((t.get(&[0, 0]) - 0.38).abs() < 1e-12);
    }

    #[test]
    fn radius_of_permutation_cycles_of_any_length() {
        for n in 3..=12 {
            let succ: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
            let r = spectral_radius(&cycle_matrix(&succ, 0.0, 0.475)).unwrap();
            assert!((r - 0.475).abs() < 1e-9, "n = {n}: {r}");
        }
    }

    #[test]
    fn repeated_squaring_handles_defective_and_nilpotent_matrices() {
        let jordan = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.5]);
        assert!((gelfand_radius(jordan) - 0.5).abs() < 1e-9);
        let nilpotent = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 0.0, 0.0]);
        assert_eq!(gelfand_radius(nilpotent), 0.0);
        let rotation = DMatrix::from_row_slice(2, 2, &[0.0, -0.9, 0.9, 0.0]);
        assert!((gelfand_radius(rotation) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn unstable_matrix_is_rejected_with_radius() {
        let m = Tensor::from_rows(&[vec![0.0, 1.2], vec![1.2, 0.0]]).unwrap();
        let err = check_stable(&m).unwrap_err().to_string();
        assert!(err.contains("1.2"), "{err}");
    }

    #[test]
    fn validation_rejects_out_of_range_effect() {
        let spec = SynthSpec::new(3, 4, 1, 0.0, 0).switching(2);
        assert!(spec.validate().is_ok());
        assert!(SynthSpec::new(3, 4, 1, 1.5, 0).validate().is_err());
    }
}
