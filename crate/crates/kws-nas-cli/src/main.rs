//! Architecture-search experiments for keyword spotting, end to end:
//! synthesize or ingest data, search a supernet, derive and train
//! architectures, evaluate them, and count their cost.

mod commands;
mod config;
mod error;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Darts,
    Fairdarts,
    Noisydarts,
}

impl MethodArg {
    fn to_method(self) -> kws_nas::search::SearchMethod {
        match self {
            MethodArg::Darts => kws_nas::search::SearchMethod::Darts,
            MethodArg::Fairdarts => kws_nas::search::SearchMethod::FairDarts,
            MethodArg::Noisydarts => kws_nas::search::SearchMethod::NoisyDarts,
        }
    }
}

#[derive(Parser)]
#[command(name = "kws-nas", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a differentiable architecture search and derive a genotype.
    Search {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Gaussian noise std for NoisyDARTS skip outputs.
        #[arg(long)]
        noise_std: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Discretize an alpha trajectory into a genotype file.
    Derive {
        #[arg(long)]
        alpha_csv: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
        /// Space config used to validate and hash the genotype.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a genotype from scratch and write checkpoint plus metrics.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        genotype: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Repeat over this many consecutive seeds and report mean +/- std.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Top-1 accuracy of a checkpoint (or a freshly initialized genotype).
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "genotype")]
        checkpoint: Option<PathBuf>,
        #[arg(long, requires = "seed")]
        genotype: Option<PathBuf>,
        /// Init seed when evaluating an untrained genotype.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Parameter and multiply-add counts.
    Count {
        /// Named reference model (tc-resnet-14).
        #[arg(long, conflicts_with = "genotype")]
        baseline: Option<String>,
        #[arg(long, default_value_t = 1.5)]
        multiplier: f64,
        #[arg(long)]
        genotype: Option<PathBuf>,
        /// Space config for genotype counting (defaults to the standard
        /// nine-layer schedule).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Input frames for the multiply-add count.
        #[arg(long, default_value_t = 98)]
        t_frames: usize,
    },
    /// Detection ROC sweep of a trained checkpoint.
    Roc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Generate a synthetic dataset manifest.
    Synth {
        #[arg(long)]
        speakers: usize,
        #[arg(long)]
        clips: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample uniform random genotypes from a search space.
    Random {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short = 'n', long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output_dir: PathBuf,
    },
}

fn main() {
    // clap's native error exit code is 2; usage errors must exit 1 here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Search {
            config,
            method,
            epochs,
            batch_size,
            noise_std,
            seed,
            output_dir,
        } => commands::cmd_search(
            &config,
            method.map(MethodArg::to_method),
            epochs,
            batch_size,
            noise_std,
            seed,
            output_dir,
        ),
        Command::Derive {
            alpha_csv,
            method,
            threshold,
            config,
            out,
        } => commands::cmd_derive(&alpha_csv, method.to_method(), threshold, config.as_deref(), &out),
        Command::Train {
            config,
            genotype,
            epochs,
            seed,
            seeds,
            output_dir,
        } => commands::cmd_train(&config, &genotype, epochs, seed, seeds, output_dir),
        Command::Eval {
            config,
            checkpoint,
            genotype,
            seed,
            split,
        } => commands::cmd_eval(&config, checkpoint.as_deref(), genotype.as_deref(), seed, &split),
        Command::Count {
            baseline,
            multiplier,
            genotype,
            config,
            t_frames,
        } => commands::cmd_count(baseline.as_deref(), multiplier, genotype.as_deref(), config.as_deref(), t_frames),
        Command::Roc {
            config,
            checkpoint,
            out,
            split,
        } => commands::cmd_roc(&config, &checkpoint, out.as_deref(), &split),
        Command::Synth {
            speakers,
            clips,
            seed,
            out,
        } => commands::cmd_synth(speakers, clips, seed, &out),
        Command::Random {
            config,
            count,
            seed,
            output_dir,
        } => commands::cmd_random(config.as_deref(), count, seed, &output_dir),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
