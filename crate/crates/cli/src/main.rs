//! `fcnls`: synthetic data, training, inference and evaluation for
//! FCN-driven level-set segmentation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fcnls::Error;

use crate::commands::{EvalSource, GridModels};
use crate::config::parse_assignment;

const RESOLUTION: &str = "Configuration is resolved in this order, later sources winning: \
built-in defaults, then the JSON file given by --config, then each --set key=value in \
command-line order, then the dedicated flags (--seed, --count, ...). The resolved \
configuration is written to <OUT>/config.json before any work starts.\n\n\
Exit codes: 0 success, 2 configuration error, 3 IO or format error, 4 numerical instability.";

#[derive(Parser)]
#[command(name = "fcnls", version, about = "FCN-driven level-set segmentation", after_help = RESOLUTION)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `train.max_epochs=20`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    set: Vec<(String, String)>,
    /// `seed`: seeds data generation, the split and training.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainFlags {
    /// `train.max_epochs`.
    #[arg(long)]
    epochs: Option<usize>,
    /// `train.joint_epochs`.
    #[arg(long)]
    joint_epochs: Option<usize>,
    /// `train.batch_size`.
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and split it.
    #[command(after_help = RESOLUTION)]
    Synth {
        #[command(flatten)]
        common: Common,
        /// `synthetic.count`.
        #[arg(long)]
        count: Option<usize>,
        /// `split.labeled_fraction_of_train`.
        #[arg(long)]
        labeled_fraction: Option<f64>,
    },
    /// Supervised pre-training on the labeled training split.
    #[command(after_help = RESOLUTION)]
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
        /// Dataset directory written by `synth`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Semi-supervised training with level-set pseudo-labels.
    #[command(after_help = RESOLUTION)]
    Joint {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to start from, usually the pre-trained network.
        #[arg(long)]
        model: PathBuf,
    },
    /// Probability map, mask and contour overlay for each input image.
    #[command(after_help = RESOLUTION)]
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// A PGM image or a directory of them.
        #[arg(long)]
        input: PathBuf,
        /// Refine the network map with the level set.
        #[arg(long)]
        levelset: bool,
        /// Binary PGM mask used as the shape prior during refinement.
        #[arg(long)]
        prior: Option<PathBuf>,
    },
    /// Score models on the test split and write results.csv.
    #[command(after_help = RESOLUTION)]
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Pre-trained network; with --joint and --baseline, scores the five-model grid.
        #[arg(long, requires_all = ["joint", "baseline"], conflicts_with = "predictions")]
        pretrained: Option<PathBuf>,
        /// Jointly trained network.
        #[arg(long, requires = "pretrained")]
        joint: Option<PathBuf>,
        /// Network trained with every training label.
        #[arg(long, requires = "pretrained")]
        baseline: Option<PathBuf>,
        /// Directory of predicted masks named `<id>.pgm` or `<id>_mask.pgm`.
        #[arg(long, required_unless_present = "pretrained")]
        predictions: Option<PathBuf>,
        /// Model name for --predictions rows.
        #[arg(long, default_value = "predictions")]
        name: String,
    },
}

fn push<T: ToString>(set: &mut Vec<(String, String)>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        set.push((key.to_string(), v.to_string()));
    }
}

fn resolve(common: &Common, extra: Vec<(String, String)>) -> fcnls::Result<config::RunConfig> {
    let mut set = common.set.clone();
    set.extend(extra);
    push(&mut set, "seed", common.seed);
    config::resolve(common.config.as_deref(), &set)
}

fn train_flags(t: &TrainFlags) -> Vec<(String, String)> {
    let mut set = Vec::new();
    push(&mut set, "train.max_epochs", t.epochs);
    push(&mut set, "train.joint_epochs", t.joint_epochs);
    push(&mut set, "train.batch_size", t.batch_size);
    set
}

fn run(cli: Cli) -> fcnls::Result<()> {
    match cli.command {
        Command::Synth {
            common,
            count,
            labeled_fraction,
        } => {
            let mut set = Vec::new();
            push(&mut set, "synthetic.count", count);
            push(&mut set, "split.labeled_fraction_of_train", labeled_fraction);
            commands::synth(&resolve(&common, set)?, &common.out)
        }
        Command::Pretrain { common, train, data } => commands::pretrain(&resolve(&common, train_flags(&train))?, &data, &common.out),
        Command::Joint { common, train, data, model } => commands::joint(&resolve(&common, train_flags(&train))?, &data, &model, &common.out),
        Command::Infer {
            common,
            model,
            input,
            levelset,
            prior,
        } => commands::infer(&resolve(&common, Vec::new())?, &model, &input, prior.as_deref(), levelset, &common.out),
        Command::Eval {
            common,
            data,
            pretrained,
            joint,
            baseline,
            predictions,
            name,
        } => {
            let cfg = resolve(&common, Vec::new())?;
            let source = match (&pretrained, &joint, &baseline, &predictions) {
                (Some(p), Some(j), Some(b), _) => EvalSource::Grid(GridModels {
                    pretrained: p,
                    joint: j,
                    baseline: b,
                }),
                (_, _, _, Some(dir)) => EvalSource::Predictions { dir, name: &name },
                _ => unreachable!("clap enforces one evaluation source"),
            };
            commands::eval(&cfg, &data, source, &common.out).map(|_| ())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::NumericalInstability { .. } => 4,
        Error::Io { .. } | Error::Format { .. } | Error::Checkpoint { .. } | Error::Json(_) | Error::Dimension(_) | Error::DegenerateMask(_) => 3,
    }
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
