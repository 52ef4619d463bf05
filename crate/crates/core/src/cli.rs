//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{parse_loss_weights, Switch, TrainConfig};
use crate::corpus::{arguments_json, load_corpus, split, stats, write_corpus, Dataset, Instance};
use crate::error::{CsrlError, Result};
use crate::graph::dump_json;
use crate::harness::{build_model, evaluate, run_ablation, train};
use crate::metrics::{Metrics, TupleCounts};
use crate::model::Model;
use crate::synthetic::{generate, SyntheticConfig};

/// Gradient-check pass threshold on the maximum relative error.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(
    name = "csagn",
    version,
    about = "Conversational semantic role labeling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model; writes the per-epoch JSON log.
    Train(TrainArgs),
    /// Score a checkpoint on a corpus; writes the metrics report.
    Eval(EvalArgs),
    /// Corpus statistics as JSON.
    Stats(StatsArgs),
    /// Train baseline and one ablation on a seeded split; writes both metrics.
    Ablate(AblateArgs),
    /// Finite-difference check of the full pipeline on one instance.
    GradCheck(GradCheckArgs),
    /// Utterance graph and edge weights of one instance as JSON.
    DumpGraph(DumpGraphArgs),
    /// Write a seeded synthetic corpus.
    GenSynthetic(GenArgs),
}

#[derive(Debug, Args)]
struct Settings {
    /// Flat `key = value` config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    d_graph: Option<usize>,
    /// Three comma-separated weights: srl,intra,ut.
    #[arg(long, value_name = "A,B,C")]
    loss_weights: Option<String>,
}

impl Settings {
    fn resolve(&self, switches: &[String]) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.window {
            cfg.model.window = v;
        }
        if let Some(v) = self.d_graph {
            cfg.model.d_graph = v;
        }
        if let Some(v) = &self.loss_weights {
            cfg.loss_weights = parse_loss_weights(v)?;
        }
        for s in switches {
            cfg = cfg.with_switch(s.parse()?);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Dev corpus for early stopping and best-epoch selection.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Where to write the trained checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ablation switch; repeatable.
    #[arg(long)]
    switch: Vec<String>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON-lines prediction dump, one line per instance.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    switch: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Args)]
struct GradCheckArgs {
    #[arg(long)]
    data: PathBuf,
    /// Instance to check.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Check this checkpoint instead of a fresh initialization.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Elements checked per parameter tensor.
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    switch: Vec<String>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Args)]
struct DumpGraphArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    switch: Vec<String>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Number of dialogues.
    #[arg(long, default_value_t = 50)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    max_utterances: usize,
    #[arg(long, default_value_t = 0.5)]
    cross_fraction: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct MetricsReport {
    #[serde(flatten)]
    metrics: Metrics,
    counts: TupleCounts,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn instance(data: &Dataset, index: usize) -> Result<&Instance> {
    data.instances.get(index).ok_or_else(|| {
        CsrlError::Config(format!(
            "--index {index} out of range ({} instances)",
            data.len()
        ))
    })
}

fn model_for(data: &Dataset, checkpoint: Option<&Path>, cfg: &TrainConfig) -> Result<Model> {
    match checkpoint {
        Some(p) => Model::load(p),
        None => build_model(data, cfg),
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => {
            let cfg = a.settings.resolve(&a.switch)?;
            let data = load_corpus(&a.data)?;
            let dev = a.dev.as_deref().map(load_corpus).transpose()?;
            let outcome = train(&data, dev.as_ref(), &cfg)?;
            if let Some(p) = &a.checkpoint {
                outcome.model.save(p)?;
            }
            let mut out = output(a.out.as_deref())?;
            for entry in &outcome.log {
                serde_json::to_writer(&mut out, entry)?;
                writeln!(out)?;
            }
            out.flush()?;
        }
        Command::Eval(a) => {
            let model = Model::load(&a.checkpoint)?;
            let data = load_corpus(&a.data)?;
            let eval = evaluate(&model, &data)?;
            if let Some(p) = &a.predictions {
                let mut out = output(Some(p))?;
                for (inst, pred) in data.instances.iter().zip(&eval.predictions) {
                    let line = serde_json::json!({
                        "id": inst.conversation.id,
                        "predicate": {
                            "utt": inst.frame.predicate_utt,
                            "start": inst.frame.predicate_span.start,
                            "end": inst.frame.predicate_span.end,
                        },
                        "arguments": arguments_json(pred),
                    });
                    serde_json::to_writer(&mut out, &line)?;
                    writeln!(out)?;
                }
                out.flush()?;
            }
            write_json(
                a.out.as_deref(),
                &MetricsReport {
                    metrics: eval.metrics,
                    counts: eval.counts,
                },
            )?;
        }
        Command::Stats(a) => {
            write_json(a.out.as_deref(), &stats(&load_corpus(&a.data)?)?)?;
        }
        Command::Ablate(a) => {
            let switch: Switch = a.switch.parse()?;
            let cfg = a.settings.resolve(&[])?;
            let data = load_corpus(&a.data)?;
            let parts = split(&data, [0.8, 0.1, 0.1], cfg.seed)?;
            let test = if parts.test.is_empty() {
                &parts.train
            } else {
                &parts.test
            };
            let dev = (!parts.dev.is_empty()).then_some(&parts.dev);
            write_json(
                a.out.as_deref(),
                &run_ablation(&parts.train, dev, test, &cfg, switch)?,
            )?;
        }
        Command::GradCheck(a) => {
            let cfg = a.settings.resolve(&a.switch)?;
            let data = load_corpus(&a.data)?;
            let model = model_for(&data, a.checkpoint.as_deref(), &cfg)?;
            let report = model.grad_check(
                instance(&data, a.index)?,
                &cfg.effective_weights(),
                cfg.reduction,
                a.count,
                GRAD_CHECK_TOLERANCE,
            )?;
            write_json(a.out.as_deref(), &report)?;
            if !report.passed() {
                return Err(CsrlError::Config(format!(
                    "gradient check failed: max relative error {:.3e}",
                    report.max_rel_error()
                )));
            }
        }
        Command::DumpGraph(a) => {
            let cfg = a.settings.resolve(&a.switch)?;
            let data = load_corpus(&a.data)?;
            let model = model_for(&data, a.checkpoint.as_deref(), &cfg)?;
            let inst = instance(&data, a.index)?;
            let (graph, alpha) = model.edge_weights(inst)?;
            write_json(
                a.out.as_deref(),
                &dump_json(&inst.conversation.id, &graph, &alpha),
            )?;
        }
        Command::GenSynthetic(a) => {
            let data = generate(&SyntheticConfig {
                num_dialogs: a.count,
                max_utterances: a.max_utterances,
                cross_fraction: a.cross_fraction,
                seed: a.seed,
            });
            let mut out = output(a.out.as_deref())?;
            write_corpus(&data, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Parses `argv` (program name first) and runs one command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
