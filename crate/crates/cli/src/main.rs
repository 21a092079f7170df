//! `geoview`: generate data, train, evaluate and report the viewpoint
//! robustness experiments.
//!
//! Config values come from the JSON file given by `--config` (defaults when
//! absent), then `GEOVIEW_WORKERS`, then flags; later sources win.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geoview::camera::Perturbation;
use geoview::Error;

use commands::Split;
use config::{Overrides, RunConfig};
use manifest::ManifestWriter;

#[derive(Parser, Debug)]
#[command(name = "geoview", version, about = "Viewpoint-robust planner experiments on a synthetic multi-camera world")]
struct Cli {
    /// JSON run config; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Training seed (parameter init and batch order).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Threads for rendering and per-sample evaluation.
    #[arg(long, global = true, env = "GEOVIEW_WORKERS")]
    workers: Option<usize>,

    /// Use the reference learning rate of 5e-5 instead of the configured one.
    #[arg(long, global = true)]
    paper_lr: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render datasets and write the training rig.
    Gen {
        #[arg(long, value_enum, default_value = "all")]
        split: Split,
    },
    /// Train a planner; writes epoch checkpoints and a training report.
    Train {
        /// Directory with datasets from `gen`; rendered on the fly otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the evaluation scenes.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Test-time rig file; the training rig when absent.
        #[arg(long)]
        rig: Option<PathBuf>,
        /// Also dump fusion attention weights for this sample index.
        #[arg(long)]
        attention: Option<usize>,
    },
    /// Evaluate under the original and every perturbed rig.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Model label used in the table.
        #[arg(long, default_value = "model")]
        name: String,
    },
    /// Perturb the rig, then restore training extrinsics in the positional
    /// embeddings for chosen camera subsets.
    Counterfactual {
        #[arg(long)]
        checkpoint: PathBuf,
        /// For example `depth+1` or `pitch-10`.
        #[arg(long)]
        perturbation: Option<String>,
        /// Comma-separated sets: none, front_rear, sides, all, or `a+b` lists.
        #[arg(long, value_delimiter = ',')]
        sets: Option<Vec<String>>,
    },
    /// Train and sweep every depth source and fusion combination.
    Ablate,
    /// Build tables, plots and a JSON summary from earlier output directories.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen { .. } => "gen",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Sweep { .. } => "sweep",
            Command::Counterfactual { .. } => "counterfactual",
            Command::Ablate => "ablate",
            Command::Report { .. } => "report",
        }
    }

    fn inputs(&self, config: Option<&PathBuf>) -> Vec<PathBuf> {
        let mut v: Vec<PathBuf> = config.cloned().into_iter().collect();
        match self {
            Command::Train { data: Some(d) } => v.push(d.clone()),
            Command::Eval { checkpoint, rig, .. } => {
                v.push(checkpoint.clone());
                v.extend(rig.clone());
            }
            Command::Sweep { checkpoint, .. } | Command::Counterfactual { checkpoint, .. } => {
                v.push(checkpoint.clone())
            }
            Command::Report { inputs } => v.extend(inputs.iter().cloned()),
            _ => {}
        }
        v
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 3,
        Error::Io { .. } => 4,
        Error::Contract(_) | Error::Dimension(_) => 5,
        Error::Format { .. } => 6,
        Error::NonFinite(_) => 7,
        _ => 1,
    }
}

fn run(cli: Cli) -> geoview::Result<()> {
    let ov = Overrides {
        seed: cli.seed,
        workers: cli.workers,
        paper_lr: cli.paper_lr,
    };
    let cfg = RunConfig::resolve(cli.config.as_deref(), &ov)?;
    let perturbation = match &cli.command {
        Command::Counterfactual {
            perturbation: Some(s), ..
        } => Some(s.parse::<Perturbation>()?),
        _ => None,
    };
    let out = cli.out.as_path();
    let manifest = ManifestWriter::start(
        out,
        cli.command.name(),
        cfg.hash(),
        cfg.train.seed,
        cli.command.inputs(cli.config.as_ref()),
    )?;
    let outcome = match &cli.command {
        Command::Gen { split } => commands::generate(&cfg, *split, out),
        Command::Train { data } => commands::train(&cfg, data.as_deref(), out),
        Command::Eval {
            checkpoint,
            rig,
            attention,
        } => commands::evaluate(&cfg, checkpoint, rig.as_deref(), *attention, out),
        Command::Sweep { checkpoint, name } => commands::sweep(&cfg, checkpoint, name, out),
        Command::Counterfactual { checkpoint, sets, .. } => {
            commands::counterfactual_cmd(&cfg, checkpoint, perturbation, sets.clone(), out)
        }
        Command::Ablate => commands::ablate(&cfg, out),
        Command::Report { inputs } => commands::report(inputs, out),
    };
    manifest.finish(&outcome)?;
    outcome.map(|_| ())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
