use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaer::harness::{self, RunConfig, RunRecord, SweepAxis};
use adaer::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adaer", version, about = "Class-incremental continual learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Continual run of the configured strategy over every seed.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// One run per value of a config axis (memory_M, tau, lambda).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. 50,100,200
        #[arg(long)]
        values: String,
    },
    /// Joint i.i.d. training on all tasks at once.
    Joint {
        #[arg(long)]
        config: PathBuf,
    },
    /// Table of aggregate metrics for every JSON summary in a directory.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 1,
        Error::Io { .. } | Error::Format { .. } => 2,
        Error::Numeric(_) => 3,
        _ => 1,
    }
}

fn output_dir(config: &RunConfig) -> PathBuf {
    config.output.clone().unwrap_or_else(|| PathBuf::from("results"))
}

fn emit(record: &RunRecord, dir: &Path, name: &str) -> adaer::Result<bool> {
    let (csv, json) = harness::write_outputs(record, dir, name)?;
    let acc = record.aggregate.acc.map_or("N/A".to_string(), |s| {
        format!("{:.2}% ± {:.2}", 100.0 * s.mean, 100.0 * s.std)
    });
    println!("{name}: Acc {acc}  -> {} , {}", csv.display(), json.display());
    let mut failed = false;
    for s in record.failed_seeds() {
        eprintln!("seed {} failed: {}", s.seed, s.failure.as_deref().unwrap_or(""));
        failed = true;
    }
    Ok(failed)
}

fn parse_values(text: &str) -> adaer::Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad sweep value {v:?}")))
        })
        .collect()
}

fn execute(cli: Cli) -> adaer::Result<bool> {
    match cli.command {
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let record = harness::run_experiment(&cfg)?;
            emit(&record, &output_dir(&cfg), cfg.strategy.name())
        }
        Command::Joint { config } => {
            let cfg = RunConfig::load(&config)?;
            let record = harness::run_joint(&cfg)?;
            emit(&record, &output_dir(&cfg), "joint")
        }
        Command::Sweep { config, axis, values } => {
            let cfg = RunConfig::load(&config)?;
            let axis: SweepAxis = axis.parse()?;
            let values = parse_values(&values)?;
            let records = harness::sweep(&cfg, axis, &values)?;
            let mut failed = false;
            for (v, r) in values.iter().zip(&records) {
                let name = format!("{}_{}_{}", cfg.strategy, axis, v);
                failed |= emit(r, &output_dir(&cfg), &name)?;
            }
            Ok(failed)
        }
        Command::Report { input } => {
            let records = harness::read_summaries(&input)?;
            print!("{}", harness::render_report(&records));
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
