use std::fs::File;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hk_core::harness::{
    default_workers, output::write_results, run_resolved, scenarios::write_scenario_rows,
    reproduce_figure, ExperimentConfig, OutputFormat, Scenario, WORKERS_ENV,
};
use hk_core::HkError;

#[derive(Parser)]
#[command(name = "hk-expect", version, about = "Herman-Kluk expectation values by Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Jsonl => OutputFormat::JsonLines,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        config: PathBuf,
        /// Output path; defaults to the config's `output` or stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Worker threads.
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
        /// Overrides the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a preconfigured reference experiment.
    Reproduce {
        #[arg(value_parser = ["init-scan", "harmonic-d5", "henon-heiles"])]
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
}

fn exit_code(e: &HkError) -> ExitCode {
    match e {
        HkError::Config { .. } => ExitCode::from(2),
        HkError::BlowUp { .. } => ExitCode::from(3),
        _ => ExitCode::from(1),
    }
}

fn sink(out: Option<PathBuf>) -> hk_core::Result<Box<dyn io::Write>> {
    Ok(match out {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> hk_core::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            format,
            workers,
            seed,
        } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let rc = cfg.resolve()?;
            let workers = workers.unwrap_or_else(default_workers);
            log::info!("running {} repeat(s) of N = {} on {workers} worker(s)", rc.repeats, rc.samples);
            let output = run_resolved(&rc, workers)?;
            for d in &output.diagnostics {
                if d.dropped > 0 {
                    log::warn!("repeat {}: dropped {} sample(s)", d.repeat, d.dropped);
                }
            }
            write_results(&output.table, sink(out.or(cfg.output))?, format.into())
        }
        Command::Reproduce {
            scenario,
            out,
            format,
            workers,
        } => {
            let scenario: Scenario = scenario.parse()?;
            let rows = reproduce_figure(scenario, workers.unwrap_or_else(default_workers))?;
            write_scenario_rows(&rows, sink(out)?, format.into())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hk-expect: {e}");
            exit_code(&e)
        }
    }
}
