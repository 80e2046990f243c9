//! Command-line front end: argument parsing, run records and replay.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dastgcn::data::SynthSpec;
use serde::{Deserialize, Serialize};

use config::RunConfig;

/// Environment variable bounding the worker pool.
pub const THREADS_ENV: &str = "DASTGC_THREADS";

/// An invalid invocation; maps to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

#[derive(Debug, Parser)]
#[command(
    name = "dastgcn",
    version,
    about = "Dynamic adaptive spatio-temporal graph convolution for time-series classification"
)]
#[command(long_about = "Dynamic adaptive spatio-temporal graph convolution for time-series classification.

Every run writes run.json into its output directory with the fully resolved
configuration; `dastgcn --replay DIR/run.json --out NEW` repeats it exactly.

Configuration keys (file via --config, or --set KEY=VALUE):
  model.name  model.K  model.M  model.f  model.ks  model.d  model.dropout
  model.tlc  model.adjacency  model.dilations
  train.epochs  train.batch_size  train.lr_max  train.warmup_epochs
  train.folds  train.seed  train.zscore
  transfer.mode  transfer.task  scale.sizes  scale.models  ablate.linear")]
pub struct Cli {
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// key=value configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Configuration override; repeatable and applied after --config.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Repeat the run recorded in a run.json.
    #[arg(long, global = true, value_name = "RUN_JSON", conflicts_with_all = ["config", "set"])]
    replay: Option<PathBuf>,

    /// Worker threads; defaults to $DASTGC_THREADS, then all cores.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Args)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr_max: Option<f64>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    /// Cross-validation folds (at least 2).
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    folds: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
}

impl TrainFlags {
    fn pairs(&self) -> Vec<(String, String)> {
        let mut p = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                p.push((format!("train.{k}"), v));
            }
        };
        push("epochs", self.epochs.map(|v| v.to_string()));
        push("batch_size", self.batch_size.map(|v| v.to_string()));
        push("lr_max", self.lr_max.map(|v| v.to_string()));
        push("warmup_epochs", self.warmup_epochs.map(|v| v.to_string()));
        push("folds", self.folds.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        p
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Frozen,
    Finetune,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a JSON spec.
    Synth {
        #[arg(long, value_name = "SPEC_JSON")]
        spec: PathBuf,
    },
    /// Train one network on a whole dataset and save a checkpoint.
    Train {
        #[arg(long, value_name = "MANIFEST")]
        data: PathBuf,
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Stratified k-fold cross-validation of one model.
    Cv {
        #[arg(long, value_name = "MANIFEST")]
        data: PathBuf,
        /// Network variant name or `linear`.
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Cross-validate every ablation variant and the linear baseline.
    Ablate {
        #[arg(long, value_name = "MANIFEST")]
        data: PathBuf,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Accuracy against samples per class.
    Scale {
        #[arg(long, value_name = "MANIFEST")]
        data: PathBuf,
        /// Samples per class, comma-separated.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Model names, comma-separated.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Export the learned graph factors of a checkpoint.
    ExportGraph {
        #[arg(long, value_name = "MODEL_DGCP")]
        checkpoint: PathBuf,
        /// Defaults to provenance.json next to the checkpoint.
        #[arg(long, value_name = "JSON")]
        provenance: Option<PathBuf>,
    },
    /// Pretrained-graph versus scratch comparison on a target dataset.
    Transfer {
        #[arg(long, value_name = "MANIFEST")]
        source: PathBuf,
        #[arg(long, value_name = "MANIFEST")]
        target: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Finite-difference check of every primitive and model variant.
    CheckGrads {
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// What a run did, with inputs resolved to absolute paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Synth { spec: SynthSpec },
    Train { data: PathBuf },
    Cv { data: PathBuf },
    Ablate { data: PathBuf },
    Scale { data: PathBuf },
    ExportGraph { checkpoint: PathBuf, provenance: PathBuf },
    Transfer { source: PathBuf, target: PathBuf },
    CheckGrads,
}

/// Contents of run.json.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    #[serde(flatten)]
    pub invocation: Invocation,
    pub config: RunConfig,
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))
}

fn manifest_path(p: &Path) -> Result<PathBuf> {
    let p = if p.is_dir() { p.join("manifest.json") } else { p.to_path_buf() };
    absolute(&p)
}

fn pairs_from_flags(cli: &Cli) -> Result<Vec<(String, String)>> {
    let mut pairs = match &cli.config {
        Some(path) => config::read_pairs(path)?,
        None => Vec::new(),
    };
    for s in &cli.set {
        pairs.extend(config::parse_pairs(s, "--set")?);
    }
    match &cli.command {
        Some(Command::Train { model, train, .. } | Command::Cv { model, train, .. }) => {
            if let Some(m) = model {
                pairs.push(("model.name".into(), m.clone()));
            }
            pairs.extend(train.pairs());
        }
        Some(Command::Ablate { train, .. }) => pairs.extend(train.pairs()),
        Some(Command::Scale { sizes, models, train, .. }) => {
            if let Some(s) = sizes {
                pairs.push(("scale.sizes".into(), s.iter().map(usize::to_string).collect::<Vec<_>>().join(",")));
            }
            if let Some(m) = models {
                pairs.push(("scale.models".into(), m.join(",")));
            }
            pairs.extend(train.pairs());
        }
        Some(Command::Transfer { mode, train, .. }) => {
            if let Some(m) = mode {
                let name = match m {
                    ModeArg::Frozen => "frozen",
                    ModeArg::Finetune => "finetune",
                };
                pairs.push(("transfer.mode".into(), name.into()));
            }
            pairs.extend(train.pairs());
        }
        Some(Command::CheckGrads { seed: Some(s) }) => pairs.push(("train.seed".into(), s.to_string())),
        _ => {}
    }
    Ok(pairs)
}

fn invocation(command: &Command) -> Result<Invocation> {
    Ok(match command {
        Command::Synth { spec } => {
            let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
            let spec: SynthSpec =
                serde_json::from_str(&text).with_context(|| format!("parsing synthetic spec {}", spec.display()))?;
            Invocation::Synth { spec }
        }
        Command::Train { data, .. } => Invocation::Train { data: manifest_path(data)? },
        Command::Cv { data, .. } => Invocation::Cv { data: manifest_path(data)? },
        Command::Ablate { data, .. } => Invocation::Ablate { data: manifest_path(data)? },
        Command::Scale { data, .. } => Invocation::Scale { data: manifest_path(data)? },
        Command::ExportGraph { checkpoint, provenance } => {
            let prov = match provenance {
                Some(p) => p.clone(),
                None => checkpoint.with_file_name("provenance.json"),
            };
            Invocation::ExportGraph { checkpoint: absolute(checkpoint)?, provenance: absolute(&prov)? }
        }
        Command::Transfer { source, target, .. } => {
            Invocation::Transfer { source: manifest_path(source)?, target: manifest_path(target)? }
        }
        Command::CheckGrads { .. } => Invocation::CheckGrads,
    })
}

/// Resolves the command line into a run record.
fn plan(cli: &Cli) -> Result<RunRecord> {
    if let Some(path) = &cli.replay {
        if cli.command.is_some() {
            return Err(usage("--replay repeats the recorded command; give no subcommand"));
        }
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let record: RunRecord =
            serde_json::from_str(&text).with_context(|| format!("parsing run record {}", path.display()))?;
        return Ok(record);
    }
    let Some(command) = &cli.command else {
        return Err(usage("a subcommand is required (see --help)"));
    };
    let config = config::apply(&RunConfig::default(), &pairs_from_flags(cli)?)?.resolved();
    config.train.validate().map_err(|e| usage(e.to_string()))?;
    config.candidate()?;
    config.scale_candidates()?;
    Ok(RunRecord { version: env!("CARGO_PKG_VERSION").into(), invocation: invocation(command)?, config })
}

fn thread_count(cli: &Cli) -> Result<Option<usize>> {
    if let Some(n) = cli.threads {
        return Ok(Some(usize::from(n)));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(None),
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let record = plan(cli)?;
    let out = cli.out.clone();
    if out.is_none() && record.invocation != Invocation::CheckGrads {
        return Err(usage("--out is required"));
    }
    if let Some(dir) = &out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        commands::write_json(&dir.join("run.json"), &record)?;
    }
    let threads = thread_count(cli)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("building the worker pool")?;
    pool.install(|| commands::run_record(&record, out.as_deref()))
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let line = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {line}");
            if e.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}
