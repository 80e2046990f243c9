//! Execution of a resolved run record.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dastgcn::data::csv::write_matrix_csv;
use dastgcn::data::{load_dataset, synth_generate, Dataset, SynthSpec};
use dastgcn::model::{load_model, realized_adjacencies, save_model};
use dastgcn::training::{
    ablation_grid, evaluate, fit_model, gradient_suite, prepare, scaling_csv, scaling_experiment, Candidate, CheckLine,
    TrainReport,
};
use dastgcn::transfer::{export_graph, transfer_experiment, Provenance};
use dastgcn::{ModelConfig, TrainConfig};
use serde::Serialize;

use crate::config::RunConfig;
use crate::{usage, Invocation, RunRecord};

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).with_context(|| format!("serialising {}", path.display()))?;
    write_text(path, &(text + "\n"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn dataset(path: &Path) -> Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn base_model(cfg: &RunConfig, data: &Dataset) -> ModelConfig {
    cfg.base_model(data.nodes(), data.channels())
}

pub(crate) fn run_record(record: &RunRecord, out: Option<&Path>) -> Result<()> {
    let cfg = &record.config;
    let tc = &cfg.train;
    let out_dir = || out.ok_or_else(|| usage("--out is required"));
    match &record.invocation {
        Invocation::Synth { spec } => synth(spec, out_dir()?),
        Invocation::Train { data } => train(cfg, &dataset(data)?, out_dir()?),
        Invocation::Cv { data } => cv(cfg, &dataset(data)?, out_dir()?),
        Invocation::Ablate { data } => ablate(cfg, &dataset(data)?, out_dir()?),
        Invocation::Scale { data } => scale(cfg, &dataset(data)?, out_dir()?),
        Invocation::ExportGraph { checkpoint, provenance } => export(checkpoint, provenance, out_dir()?),
        Invocation::Transfer { source, target } => transfer(cfg, &dataset(source)?, &dataset(target)?, out_dir()?),
        Invocation::CheckGrads => check_grads(tc.seed, out),
    }
}

fn synth(spec: &SynthSpec, out: &Path) -> Result<()> {
    let truth = synth_generate(spec, out).context("generating synthetic dataset")?;
    println!(
        "wrote {} samples of N = {} to {} (spectral radius {:.4})",
        2 * spec.samples_per_class,
        spec.nodes,
        truth.manifest.display(),
        truth.spectral_radius
    );
    Ok(())
}

fn network(cfg: &RunConfig, command: &str) -> Result<dastgcn::Variant> {
    match cfg.candidate()? {
        Candidate::Network(v) => Ok(v),
        Candidate::Linear => Err(usage(format!("{command} needs a network model, not '{}'", cfg.model.name))),
    }
}

fn write_adjacencies(out: &Path, prefix: &str, adjacency: &[dastgcn::Tensor]) -> Result<Vec<PathBuf>> {
    adjacency
        .iter()
        .enumerate()
        .map(|(m, a)| {
            let path = out.join(format!("{prefix}_{m}.csv"));
            write_matrix_csv(&path, a).with_context(|| format!("writing {}", path.display()))?;
            Ok(path)
        })
        .collect()
}

#[derive(Serialize)]
struct FitSummary<'a> {
    model: String,
    dataset: &'a str,
    samples: usize,
    train_metrics: dastgcn::Metrics,
    loss_curve: &'a [dastgcn::training::EpochLoss],
    model_config: &'a ModelConfig,
    train_config: &'a TrainConfig,
}

fn train(cfg: &RunConfig, data: &Dataset, out: &Path) -> Result<()> {
    let variant = network(cfg, "train")?;
    let model = variant.apply(&base_model(cfg, data));
    let tc = &cfg.train;
    let ready = prepare(data, tc);
    let all: Vec<usize> = (0..ready.len()).collect();
    let fit = fit_model(&ready, &all, &model, tc, "full", None)?;
    save_model(&out.join("model.dgcp"), &fit.config, &fit.params)?;
    let provenance = Provenance::new(&data.name, &cfg.transfer.task, &model, tc)?;
    write_json(&out.join("provenance.json"), &provenance)?;
    let mut curve = String::from("epoch,loss,lr\n");
    for e in &fit.loss_curve {
        writeln!(curve, "{},{},{}", e.epoch, e.loss, e.lr).expect("string write");
    }
    write_text(&out.join("losscurve.csv"), &curve)?;
    write_adjacencies(out, "adjacency", &realized_adjacencies(&fit.params, &fit.config)?)?;
    let signals: Vec<_> = ready.samples.iter().map(|s| &s.signal).collect();
    let metrics = evaluate(&fit.config, &fit.params, &signals, &ready.labels())?;
    write_json(
        &out.join("report.json"),
        &FitSummary {
            model: variant.name().into(),
            dataset: &data.name,
            samples: data.len(),
            train_metrics: metrics,
            loss_curve: &fit.loss_curve,
            model_config: &fit.config,
            train_config: tc,
        },
    )?;
    println!("{}: training accuracy {:.1}% on {} samples", variant.name(), 100.0 * metrics.accuracy, data.len());
    Ok(())
}

fn write_report_files(report: &TrainReport, out: &Path, suffix: &str) -> Result<()> {
    write_text(&out.join(format!("metrics{suffix}.csv")), &report.metrics_csv())?;
    for f in &report.folds {
        write_text(&out.join(format!("losscurve{suffix}_fold{}.csv", f.fold)), &report.loss_csv(f.fold))?;
        write_adjacencies(out, &format!("adjacency{suffix}_fold{}", f.fold), &f.adjacency)?;
    }
    Ok(())
}

fn cv(cfg: &RunConfig, data: &Dataset, out: &Path) -> Result<()> {
    let report = cfg.candidate()?.cross_validate(data, &base_model(cfg, data), &cfg.train)?;
    write_json(&out.join("report.json"), &report)?;
    write_report_files(&report, out, "")?;
    println!("{}", report.summary_line());
    if report.summary.accuracy.is_none() {
        bail!("every fold failed");
    }
    Ok(())
}

fn print_checks(lines: &[CheckLine]) {
    for l in lines {
        println!(
            "{} {}: max rel error {:.3e} (tolerance {:.0e}, {} coordinates)",
            if l.passed() { "PASS" } else { "FAIL" },
            l.name,
            l.max_rel_error,
            l.tolerance,
            l.coordinates
        );
    }
}

fn ablate(cfg: &RunConfig, data: &Dataset, out: &Path) -> Result<()> {
    let grid = ablation_grid(data, &base_model(cfg, data), &cfg.train, cfg.ablate.linear)?;
    write_json(&out.join("ablation.json"), &grid)?;
    let mut table = String::from("model,acc_mean,acc_sd,sens_mean,spec_mean,failed_folds\n");
    let mean = |m: &Option<dastgcn::training::MeanSd>| m.map_or_else(|| "NA".into(), |v| v.mean.to_string());
    for r in &grid.reports {
        let s = &r.summary;
        let sd = s.accuracy.and_then(|a| a.sd).map_or_else(|| "NA".into(), |v| v.to_string());
        writeln!(
            table,
            "{},{},{},{},{},{}",
            r.model,
            mean(&s.accuracy),
            sd,
            mean(&s.sensitivity),
            mean(&s.specificity),
            s.failed_folds
        )
        .expect("string write");
        write_report_files(r, out, &format!("_{}", r.model))?;
        println!("{}", r.summary_line());
    }
    write_text(&out.join("ablation.csv"), &table)?;
    print_checks(&grid.gradchecks);
    if let Some(bad) = grid.gradchecks.iter().find(|l| !l.passed()) {
        bail!("gradient check {} failed with max rel error {:.3e}", bad.name, bad.max_rel_error);
    }
    Ok(())
}

fn scale(cfg: &RunConfig, data: &Dataset, out: &Path) -> Result<()> {
    let candidates = cfg.scale_candidates()?;
    let rows = scaling_experiment(data, &candidates, &base_model(cfg, data), &cfg.train, &cfg.scale.sizes)?;
    write_text(&out.join("scaling.csv"), &scaling_csv(&rows))?;
    write_json(&out.join("scaling.json"), &rows)?;
    for r in &rows {
        println!("{} per class, {}: {:.1}±{:.1}%", r.size, r.model, 100.0 * r.acc_mean, 100.0 * r.acc_sd);
    }
    Ok(())
}

fn export(checkpoint: &Path, provenance: &Path, out: &Path) -> Result<()> {
    let (_, params) = load_model(checkpoint).with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let text =
        fs::read_to_string(provenance).with_context(|| format!("reading provenance {}", provenance.display()))?;
    let prov: Provenance =
        serde_json::from_str(&text).with_context(|| format!("parsing provenance {}", provenance.display()))?;
    let (bundle, files) = export_graph(&params, prov, out)?;
    println!("exported {} graph(s) of N = {} to {}", bundle.graphs(), bundle.nodes, files.bundle.display());
    Ok(())
}

fn transfer(cfg: &RunConfig, source: &Dataset, target: &Dataset, out: &Path) -> Result<()> {
    let variant = network(cfg, "transfer")?;
    let base = variant.apply(&base_model(cfg, target));
    let (report, bundle) = transfer_experiment(source, target, &base, &cfg.train, cfg.transfer.mode)?;
    write_json(&out.join("transfer.json"), &report)?;
    write_text(&out.join("metrics.csv"), &report.metrics_csv())?;
    bundle.write(&out.join("graph.dgcp"))?;
    write_adjacencies(out, "adjacency", &bundle.adjacencies()?)?;
    println!("{}", report.summary_line());
    Ok(())
}

fn check_grads(seed: u64, out: Option<&Path>) -> Result<()> {
    let lines = gradient_suite(seed)?;
    print_checks(&lines);
    let worst = lines.iter().map(|l| l.max_rel_error / l.tolerance).fold(0.0, f64::max);
    println!("worst error-to-tolerance ratio {worst:.3e}");
    if let Some(dir) = out {
        write_json(&dir.join("gradcheck.json"), &lines)?;
    }
    let failed: Vec<&str> = lines.iter().filter(|l| !l.passed()).map(|l| l.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(anyhow!("gradient check failed for {}", failed.join(", ")));
    }
    Ok(())
}
