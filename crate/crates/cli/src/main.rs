//! `mifi`: synthetic data generation, head training, evaluation, gradient
//! checks, schedule sweeps and keyframe selection.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mifi::data::Split;
use mifi::fusion::FusionMode;

use config::{LossName, Preset, RunConfig};
use error::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "mifi",
    version,
    about = "Multi-view feature fusion and cyclical focal loss training"
)]
struct Cli {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (or file, for sweep-alpha and keyframes).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multi-view dataset directory.
    Synth {
        #[arg(long, value_enum)]
        preset: Option<Preset>,
    },
    /// Train a classifier head and write a run directory.
    Train(TrainArgs),
    /// Evaluate a trained run on one split.
    Eval {
        /// Run directory written by `train`.
        run: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Evaluate on one camera's features instead of the trained source.
        #[arg(long)]
        view: Option<usize>,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Print the cyclical weight schedule for several betas as CSV.
    SweepAlpha {
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 4.0, 6.0])]
        betas: Vec<f64>,
        #[arg(long)]
        total_epochs: Option<u32>,
    },
    /// Select keyframes from a feature container.
    Keyframes {
        input: PathBuf,
        #[arg(short = 'n', long)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        axis: usize,
    },
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    fusion: Option<FusionMode>,
    #[arg(long)]
    view: Option<usize>,
    #[arg(long, value_enum)]
    loss: Option<LossName>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    total_epochs: Option<u32>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    decay_epochs: Option<Vec<u32>>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Dataset directory written by `synth`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Train on a bundled synthetic benchmark generated in memory.
    #[arg(long, value_enum, conflicts_with = "dataset")]
    preset: Option<Preset>,
}

impl TrainArgs {
    fn apply(self, c: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    c.$field = v;
                }
            )*};
        }
        set!(
            fusion,
            loss,
            beta,
            gamma,
            lambda1,
            lambda2,
            lr,
            epochs,
            decay_epochs,
            batch_size
        );
        if self.view.is_some() {
            c.view = self.view;
        }
        if self.total_epochs.is_some() {
            c.total_epochs = self.total_epochs;
        }
        if self.dataset.is_some() {
            c.dataset = self.dataset;
        }
        if let Some(p) = self.preset {
            c.synth = p.synth(c.synth.seed);
            c.dataset = None;
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth { preset } => {
            let mut synth = match preset {
                Some(p) => p.synth(config.synth.seed),
                None => config.synth,
            };
            if let Some(seed) = cli.seed {
                synth.seed = seed;
            }
            let out = cli.out.unwrap_or_else(|| PathBuf::from("synthetic"));
            commands::synth(&synth, &out)
        }
        Command::Train(args) => {
            args.apply(&mut config);
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            if let Some(out) = cli.out {
                config.out = out;
            }
            commands::train_run(&config)
        }
        Command::Eval { run, split, view } => commands::eval_run(&run, split, view, cli.out),
        Command::Gradcheck {
            cases,
            step,
            corrupt_gradient,
        } => {
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            commands::gradcheck(&config, cases, step, corrupt_gradient)
        }
        Command::SweepAlpha {
            betas,
            total_epochs,
        } => {
            let e_t = total_epochs.unwrap_or_else(|| config.casl().total_epochs);
            commands::sweep_alpha(&betas, e_t, cli.out.as_deref())
        }
        Command::Keyframes { input, count, axis } => {
            commands::keyframes(&input, count, axis, cli.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
