use std::fs;

use dastgcn::data::stats::{mean_pearson, normalize_scores};
use dastgcn::data::{
    generate, load_dataset, mean_corr_adjacency, pearson_matrix, read_sample, synth_generate, upper_triangle,
    write_dataset, write_sample, zscore, Dataset, DatasetManifest, Sample, SynthSpec,
};
use dastgcn::model::NodeSignalTensor;
use dastgcn::rng::substream;
use dastgcn::{Error, Tensor};
use proptest::prelude::*;
use rand::Rng;

fn f32_signal(n: usize, t: usize, seed: u64) -> NodeSignalTensor {
    let mut rng = substream(seed, "data");
    let data = (0..n * t).map(|_| f64::from(rng.random_range(-3.0f32..3.0))).collect();
    NodeSignalTensor::new(Tensor::new([n, t, 1], data).unwrap(), None).unwrap()
}

fn toy_dataset() -> Dataset {
    let samples = (0..6)
        .map(|i| Sample { signal: f32_signal(4, 10, i), label: (i % 2) as usize, subject_id: format!("s{i}") })
        .collect();
    Dataset { name: "toy".into(), samples }
}

fn textbook_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n).sqrt();
    let sb = (b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n).sqrt();
    cov / (sa * sb)
}

#[test]
fn write_then_load_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let ds = toy_dataset();
    let manifest = write_dataset(dir.path(), &ds).unwrap();
    let back = load_dataset(&manifest).unwrap();
    assert_eq!(back.name, "toy");
    assert_eq!(back.samples, ds.samples);
    let bytes_a = fs::read(dir.path().join("sample_0000.dstg")).unwrap();
    write_sample(&dir.path().join("again.dstg"), &back.samples[0].signal).unwrap();
    assert_eq!(bytes_a, fs::read(dir.path().join("again.dstg")).unwrap());
}

#[test]
fn bad_magic_is_a_corrupt_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.dstg");
    write_sample(&p, &f32_signal(2, 3, 0)).unwrap();
    let mut b = fs::read(&p).unwrap();
    b[..4].copy_from_slice(b"XXXX");
    fs::write(&p, b).unwrap();
    assert!(matches!(read_sample(&p), Err(Error::CorruptFile { .. })));
}

#[test]
fn manifest_header_conflict_is_a_consistency_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), &toy_dataset()).unwrap();
    let mut m: DatasetManifest = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    m.nodes = 5;
    fs::write(&manifest, serde_json::to_string(&m).unwrap()).unwrap();
    let err = load_dataset(&manifest).unwrap_err();
    assert!(matches!(err, Error::Consistency(_)), "{err}");
    assert!(err.to_string().contains("N=4") && err.to_string().contains("N=5"));
}

#[test]
fn missing_sample_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), &toy_dataset()).unwrap();
    fs::remove_file(dir.path().join("sample_0003.dstg")).unwrap();
    let err = load_dataset(&manifest).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("sample_0003.dstg"), "{err}");
}

#[test]
fn zscore_examples() {
    let x = NodeSignalTensor::from_series(&[vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0]]).unwrap();
    let z = zscore(&x);
    let s = 1.5f64.sqrt();
    let want = [-s, 0.0, s];
    for (a, b) in z.series(0, 0).iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((z.series(0, 0)[2] - 1.2247).abs() < 1e-4);
    assert_eq!(z.series(1, 0), vec![0.0; 3]);
}

#[test]
fn pearson_sign_cases_and_oracle() {
    let a = vec![0.3, -1.0, 2.0, 0.7, 1.1];
    let neg: Vec<f64> = a.iter().map(|v| -v).collect();
    let c = vec![4.0; 5];
    let x = NodeSignalTensor::from_series(&[a.clone(), a.clone(), neg, c]).unwrap();
    let p = pearson_matrix(&x).unwrap();
    assert!((p.get(&[0, 1]) - 1.0).abs() < 1e-15);
    assert!((p.get(&[0, 2]) + 1.0).abs() < 1e-15);
    assert_eq!(p.get(&[0, 3]), 0.0);
    assert_eq!(p.get(&[3, 3]), 0.0);

    let x = f32_signal(5, 50, 9);
    let p = pearson_matrix(&x).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let want = textbook_pearson(&x.series(i, 0), &x.series(j, 0));
            assert!((p.get(&[i, j]) - want).abs() < 1e-12, "({i},{j})");
            assert_eq!(p.get(&[i, j]), p.get(&[j, i]));
        }
        assert_eq!(p.get(&[i, i]), 1.0);
    }
}

#[test]
fn mean_correlation_cases() {
    let (x, y) = (f32_signal(4, 20, 1), f32_signal(4, 20, 2));
    let (p, q) = (pearson_matrix(&x).unwrap(), pearson_matrix(&y).unwrap());
    let same = mean_pearson([&x, &x, &x]).unwrap();
    assert!(same.max_abs_diff(&p) < 1e-15);
    let avg = mean_pearson([&x, &y]).unwrap();
    for (k, v) in avg.data().iter().enumerate() {
        assert!((v - (p.data()[k] + q.data()[k]) / 2.0).abs() < 1e-15);
    }
    let adj = mean_corr_adjacency([&x, &y]).unwrap();
    assert_eq!(adj, normalize_scores(&avg).unwrap());
    for i in 0..4 {
        assert!((adj.row(i).iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert!(adj.get(&[i, i]) >= 1.0);
    }
    let none: [&NodeSignalTensor; 0] = [];
    assert!(matches!(mean_corr_adjacency(none), Err(Error::Contract(_))));
}

#[test]
fn upper_triangle_length() {
    let m = Tensor::zeros([116, 116]);
    assert_eq!(upper_triangle(&m).len(), 6670);
    let m = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]).unwrap();
    assert_eq!(upper_triangle(&m), vec![2.0, 3.0, 6.0]);
}

#[test]
fn synth_is_balanced_and_reproducible() {
    let spec = SynthSpec::new(6, 20, 50, 0.8, 4).switching(4);
    let a = generate(&spec).unwrap();
    let labels = a.dataset.labels();
    assert_eq!(labels.len(), 100);
    assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 50);

    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth_generate(&spec, d1.path()).unwrap();
    synth_generate(&spec, d2.path()).unwrap();
    let mut names: Vec<_> = fs::read_dir(d1.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 100 + 4);
    for name in names {
        assert_eq!(fs::read(d1.path().join(&name)).unwrap(), fs::read(d2.path().join(&name)).unwrap(), "{name:?}");
    }
    let loaded = load_dataset(&d1.path().join("manifest.json")).unwrap();
    assert_eq!(loaded.len(), 100);
}

#[test]
fn zero_effect_classes_are_identically_distributed() {
    let out = generate(&SynthSpec::new(5, 30, 5, 0.0, 1)).unwrap();
    assert!(out.a_true.data().iter().all(|&v| v == 0.0));
    assert_eq!(out.a_true, out.a_base);
}

#[test]
fn graph_seed_shares_planted_matrices() {
    let mut a = SynthSpec::new(8, 40, 2, 0.8, 1);
    let mut b = SynthSpec::new(8, 20, 2, 0.8, 2);
    a.graph_seed = Some(42);
    b.graph_seed = Some(42);
    let (oa, ob) = (generate(&a).unwrap(), generate(&b).unwrap());
    assert_eq!(oa.a_true, ob.a_true);
    assert_ne!(oa.dataset.samples[0].signal, ob.dataset.samples[0].signal);
}

fn class_mean_distance(spec: &SynthSpec) -> f64 {
    let out = generate(spec).unwrap();
    let by = |label| mean_pearson(out.dataset.samples.iter().filter(|s| s.label == label).map(|s| &s.signal)).unwrap();
    let (m0, m1) = (by(0), by(1));
    m0.data().iter().zip(m1.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// The planted couplings are orthogonal, so both regimes share the lag-0
/// covariance `∝ I`. Full-scan class-mean correlations therefore differ
/// only by sampling noise at every switch period, matching the distance
/// measured when the classes are identically distributed.
#[test]
fn full_scan_correlation_does_not_separate_classes_at_any_switch_period() {
    let null = class_mean_distance(&SynthSpec::new(16, 64, 100, 0.0, 5));
    let static_d = class_mean_distance(&SynthSpec::new(16, 64, 100, 0.8, 5));
    assert!(static_d < 1.5 * null, "static {static_d} vs null {null}");
    for period in [32, 16, 8, 4, 2, 1] {
        let d = class_mean_distance(&SynthSpec::new(16, 64, 100, 0.8, 5).switching(period));
        assert!(d < 1.5 * null, "period {period}: {d} vs null {null}");
    }
}

proptest! {
    #[test]
    fn zscore_centres_every_series(vals in prop::collection::vec(-100.0f64..100.0, 24)) {
        let x = NodeSignalTensor::new(Tensor::new([3, 8, 1], vals).unwrap(), None).unwrap();
        let z = zscore(&x);
        for i in 0..3 {
            let s = z.series(i, 0);
            prop_assert!((s.iter().sum::<f64>() / 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_is_invariant_under_zscore(seed in any::<u64>(), shift in -50.0f64..50.0, scale in 0.1f64..20.0) {
        let x = f32_signal(4, 25, seed);
        let moved = NodeSignalTensor::new(x.tensor().map(|v| scale * v + shift), None).unwrap();
        let p = pearson_matrix(&x).unwrap();
        prop_assert!(pearson_matrix(&zscore(&x)).unwrap().max_abs_diff(&p) < 1e-10);
        prop_assert!(pearson_matrix(&moved).unwrap().max_abs_diff(&p) < 1e-10);
    }
}
