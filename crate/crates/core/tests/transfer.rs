use std::fs;

use dastgcn::data::csv::read_matrix_csv;
use dastgcn::data::{generate, SynthSpec};
use dastgcn::rng::substream;
use dastgcn::training::{fit_model, prepare};
use dastgcn::transfer::{export_graph, import_graph, init_with_pretrained, transfer_experiment, Provenance};
use dastgcn::{Error, GraphBundle, ModelConfig, ModelParams, TrainConfig, TransferMode};

fn small(nodes: usize) -> ModelConfig {
    ModelConfig { filters: 4, embed_dim: 3, ..ModelConfig::for_nodes(nodes) }
}

fn provenance(cfg: &ModelConfig) -> Provenance {
    Provenance::new("source", "sex", cfg, &TrainConfig::default()).unwrap()
}

fn donor(cfg: &ModelConfig, seed: u64) -> ModelParams {
    ModelParams::init(cfg, &mut substream(seed, "donor")).unwrap()
}

#[test]
fn export_then_import_is_bit_identical() {
    let cfg = small(6);
    let p = donor(&cfg, 1);
    let dir = tempfile::tempdir().unwrap();
    let (bundle, files) = export_graph(&p, provenance(&cfg), dir.path()).unwrap();
    let back = import_graph(&files.bundle).unwrap();
    assert_eq!(back, bundle);
    assert_eq!(back.factors, p.tensors.factors);
    assert_eq!(back.graphs(), 3);
    assert_eq!(files.adjacency_csv.len(), 3);
}

#[test]
fn exported_adjacency_rows_sum_to_two() {
    let cfg = ModelConfig { graphs: 1, ..small(7) };
    let dir = tempfile::tempdir().unwrap();
    let (_, files) = export_graph(&donor(&cfg, 2), provenance(&cfg), dir.path()).unwrap();
    let a = read_matrix_csv(&files.adjacency_csv[0]).unwrap();
    assert_eq!(a.shape(), [7, 7]);
    for i in 0..7 {
        let s: f64 = a.row(i).iter().sum();
        assert!((s - 2.0).abs() < 1e-9, "row {i}: {s}");
    }
}

#[test]
fn node_count_mismatch_names_both_values() {
    let cfg = ModelConfig { graphs: 1, ..ModelConfig::for_nodes(116) };
    let bundle = GraphBundle::from_params(&donor(&cfg, 3), provenance(&cfg)).unwrap();
    let target = ModelConfig::for_nodes(90);
    match init_with_pretrained(&bundle, &target, TransferMode::Frozen, &mut substream(0, "x")) {
        Err(Error::Transfer(msg)) => assert!(msg.contains("116") && msg.contains("90"), "{msg}"),
        other => panic!("{other:?}"),
    }
    let wide = ModelConfig { embed_dim: 4, ..cfg };
    assert!(matches!(
        init_with_pretrained(&bundle, &wide, TransferMode::Frozen, &mut substream(0, "x")),
        Err(Error::Transfer(_))
    ));
}

#[test]
fn incompatible_graph_counts_are_rejected() {
    let two = ModelConfig { blocks: 2, graphs: 2, dilations: vec![1, 2], ..small(5) };
    let bundle = GraphBundle::from_params(&donor(&two, 1), provenance(&two)).unwrap();
    let three = small(5);
    assert!(matches!(
        init_with_pretrained(&bundle, &three, TransferMode::Frozen, &mut substream(0, "x")),
        Err(Error::Transfer(_))
    ));
}

fn ten_steps(mode: TransferMode) -> (ModelParams, ModelParams) {
    let cfg = ModelConfig { graphs: 1, ..small(5) };
    let bundle = GraphBundle::from_params(&donor(&cfg, 4), provenance(&cfg)).unwrap();
    let init = init_with_pretrained(&bundle, &cfg, mode, &mut substream(5, "init")).unwrap();
    let tc = TrainConfig { epochs: 10, batch_size: 8, lr_max: 0.01, warmup_epochs: 2, folds: 2, seed: 3, zscore: true };
    let ds = prepare(&generate(&SynthSpec::new(5, 16, 4, 0.8, 6)).unwrap().dataset, &tc);
    let idx: Vec<usize> = (0..ds.len()).collect();
    let out = fit_model(&ds, &idx, &cfg, &tc, "freeze", Some(init.clone())).unwrap();
    assert_eq!(out.loss_curve.len(), 10);
    (init, out.params)
}

#[test]
fn frozen_factors_survive_ten_steps_bitwise() {
    let (before, after) = ten_steps(TransferMode::Frozen);
    assert_eq!(before.factors(), after.factors());
    assert_ne!(before.tensors.blocks[0].filter.weight, after.tensors.blocks[0].filter.weight);
    assert_ne!(before.tensors.fc.weight, after.tensors.fc.weight);
}

#[test]
fn finetuned_factors_move() {
    let (before, after) = ten_steps(TransferMode::Finetune);
    assert_ne!(before.factors()[0].source, after.factors()[0].source);
}

#[test]
fn transfer_experiment_pairs_arms_and_leaves_inputs_alone() {
    let src = generate(&SynthSpec { graph_seed: Some(9), ..SynthSpec::new(5, 24, 8, 0.8, 1) }).unwrap().dataset;
    let tgt = generate(&SynthSpec { graph_seed: Some(9), ..SynthSpec::new(5, 16, 6, 0.8, 2) }).unwrap().dataset;
    let tc = TrainConfig { epochs: 3, batch_size: 8, lr_max: 0.01, warmup_epochs: 1, folds: 3, seed: 4, zscore: true };
    let (report, bundle) = transfer_experiment(&src, &tgt, &small(5), &tc, TransferMode::default()).unwrap();
    assert_eq!(report.mode, TransferMode::Frozen);
    assert_eq!(bundle.graphs(), 1);
    assert_eq!(report.metrics_csv().lines().count(), 1 + 2 * tc.folds);
    assert_eq!(report.differences.len(), tc.folds);
    for (p, s) in report.pretrained.folds.iter().zip(&report.scratch.folds) {
        assert_eq!((p.train_size, p.test_size), (s.train_size, s.test_size));
        assert_eq!(p.adjacency[0], bundle.adjacencies().unwrap()[0]);
    }
    let again = transfer_experiment(&src, &tgt, &small(5), &tc, TransferMode::Frozen).unwrap().0;
    assert_eq!(report, again);
}

#[test]
fn bundle_file_is_read_only_input() {
    let cfg = ModelConfig { graphs: 1, ..small(5) };
    let dir = tempfile::tempdir().unwrap();
    let (_, files) = export_graph(&donor(&cfg, 8), provenance(&cfg), dir.path()).unwrap();
    let before = fs::read(&files.bundle).unwrap();
    let bundle = import_graph(&files.bundle).unwrap();
    init_with_pretrained(&bundle, &small(5), TransferMode::Finetune, &mut substream(0, "x")).unwrap();
    assert_eq!(fs::read(&files.bundle).unwrap(), before);
}

#[test]
fn node_mismatch_between_datasets_is_a_transfer_error() {
    let src = generate(&SynthSpec::new(5, 16, 4, 0.8, 1)).unwrap().dataset;
    let tgt = generate(&SynthSpec::new(6, 16, 4, 0.8, 1)).unwrap().dataset;
    let tc = TrainConfig { epochs: 2, warmup_epochs: 1, folds: 2, ..TrainConfig::default() };
    assert!(matches!(transfer_experiment(&src, &tgt, &small(5), &tc, TransferMode::Frozen), Err(Error::Transfer(_))));
}
