use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use retrain_core::cli::{run, ErrorSummary};
use retrain_core::panel::{Frequency, Schema};
use retrain_core::synthetic::{generate, SyntheticSpec};

#[derive(Parser)]
#[command(
    name = "retrain",
    version,
    about = "Retraining-aware backtests for global forecasting models"
)]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario described by a TOML config and write the report.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded synthetic panel as long-format CSV.
    Generate {
        #[arg(long, default_value_t = 20)]
        series: usize,
        #[arg(long, default_value_t = 200)]
        length: usize,
        #[arg(long, value_enum, default_value = "daily")]
        frequency: FrequencyArg,
        #[arg(long, default_value_t = 0.0)]
        drift: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FrequencyArg {
    Daily,
    Weekly,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match cli.command {
        Command::Run { config, out } => {
            let (code, outcome) = run(&config, out);
            match outcome {
                Ok(summary) => {
                    println!("{}", serde_json::to_string(&summary).unwrap_or_default());
                }
                Err(summary) => {
                    eprintln!("{}", serde_json::to_string(&summary).unwrap_or_default());
                }
            }
            ExitCode::from(code as u8)
        }
        Command::Generate {
            series,
            length,
            frequency,
            drift,
            seed,
            out,
        } => {
            let spec = SyntheticSpec {
                series,
                length,
                frequency: match frequency {
                    FrequencyArg::Daily => Frequency::Daily,
                    FrequencyArg::Weekly => Frequency::Weekly,
                },
                drift,
                seed,
                ..SyntheticSpec::default()
            };
            let written = generate(&spec).and_then(|panel| {
                let file = File::create(&out)?;
                panel.write_csv(BufWriter::new(file), &Schema::default())
            });
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    let summary = ErrorSummary::from_error(&e);
                    eprintln!("{}", serde_json::to_string(&summary).unwrap_or_default());
                    ExitCode::from(summary.exit_code as u8)
                }
            }
        }
    }
}
