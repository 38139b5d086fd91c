use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use adadfq_cli::commands::{self, Overrides};
use adadfq_cli::CliError;

/// Data-free quantization laboratory.
#[derive(Parser)]
#[command(name = "adadfq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; unspecified keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Quantization bit width.
    #[arg(long)]
    bits: Option<u32>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the full-precision teacher.
    TrainTeacher {
        #[command(flatten)]
        common: Common,
        /// CSV feature file; defaults to the configured synthetic dataset.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Quantize a teacher without calibration and evaluate it.
    Quantize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Calibrate a quantized student from the teacher checkpoint alone.
    Dfq {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Accuracy, per-class accuracy and confusion counts on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// ℓ1 distances between the p_ds vectors of dumped samples.
    ReportSimilarity {
        #[command(flatten)]
        common: Common,
        /// Teacher checkpoint.
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        student: PathBuf,
        /// Sample dump written by `dfq`.
        #[arg(long)]
        samples: PathBuf,
    },
}

fn print(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn run(cli: Cli) -> Result<(), CliError> {
    let resolve = |c: &Common, dataset: Option<PathBuf>| {
        commands::resolve_config(
            c.config.as_deref(),
            &Overrides {
                seed: c.seed,
                bits: c.bits,
                out_dir: c.out_dir.clone(),
                dataset,
            },
        )
    };
    match cli.command {
        Command::TrainTeacher { common, dataset } => {
            let cfg = resolve(&common, dataset)?;
            let m = commands::train_teacher(&cfg)?;
            println!(
                "train accuracy {:.4}, test accuracy {:.4}",
                m.train_accuracy, m.test_accuracy
            );
        }
        Command::Quantize { common, ckpt, dataset } => {
            let cfg = resolve(&common, dataset)?;
            print(&commands::quantize(&cfg, &ckpt)?);
        }
        Command::Dfq { common, ckpt } => {
            let cfg = resolve(&common, None)?;
            print(&commands::dfq(&cfg, &ckpt)?);
        }
        Command::Eval { common, ckpt, dataset } => {
            let cfg = resolve(&common, dataset)?;
            print(&commands::eval(&cfg, &ckpt)?);
        }
        Command::ReportSimilarity {
            common,
            ckpt,
            student,
            samples,
        } => {
            let cfg = resolve(&common, None)?;
            let m = commands::report_similarity(&cfg, &samples, &ckpt, &student)?;
            println!("wrote {}×{} similarity matrix", m.len(), m.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ADADFQ_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
