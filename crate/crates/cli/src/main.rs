//! `speclab`: gamma sweeps, device comparisons and invariant checks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use speclab_core::harness::{
    compare_devices, emit_report, run_sweep, verify_suite, ExperimentConfig, ReportFormat,
    SuiteOptions,
};
use speclab_core::metrics::{amdahl_end_to_end, load_profiles, render_ratio, shipped_profiles};
use speclab_core::pipeline::PipelineConfig;
use speclab_core::Error;

const EXIT_INVARIANT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "speclab",
    version,
    about = "Speculative decoding experiments on seeded table models"
)]
struct Cli {
    /// Overrides the base seed of the selected command.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep gamma and report simulated throughput, acceptance rate and speedup.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// csv or json
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Compare verification throughput and tokens/sec/Watt across devices.
    Compare {
        /// Device profile JSON array; the shipped illustrative profiles when omitted.
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Pipeline config JSON; illustrative defaults when omitted.
        #[arg(long)]
        pipeline: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        gamma: usize,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the distribution-equivalence and golden-model invariant suites.
    Verify {
        /// Comma-separated gammas used by every decoding check.
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<usize>>,
        #[arg(long, default_value_t = 1_000_000)]
        mc_steps: usize,
    },
    /// End-to-end speedup when only verification is accelerated.
    Amdahl {
        /// Fraction of end-to-end time spent verifying, in (0, 1).
        #[arg(long, value_delimiter = ',', default_values_t = [0.02, 0.10])]
        fraction: Vec<f64>,
        /// Verification speedup.
        #[arg(long, value_delimiter = ',', default_values_t = [6.99, 7.74])]
        speedup: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io { .. } => EXIT_IO,
                _ => EXIT_CONFIG,
            })
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Sweep {
            config,
            out,
            format,
        } => {
            let format: ReportFormat = format.parse()?;
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(seed) = cli.seed {
                config.decode.base_seed = seed;
            }
            let report = run_sweep(&config)?;
            emit_report(&report, format, &out)?;
            for row in &report.rows {
                println!(
                    "gamma={:<3} tokens/s={:>10.3} tar={:<8} speedup={}",
                    row.gamma,
                    row.tokens_per_sec,
                    row.tar
                        .map(|t| format!("{t:.4}"))
                        .unwrap_or_else(|| "-".into()),
                    render_ratio(row.speedup)
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare {
            profiles,
            pipeline,
            gamma,
            out,
        } => {
            let profiles = match profiles {
                Some(path) => load_profiles(&path)?,
                None => shipped_profiles(),
            };
            let pipeline = match pipeline {
                Some(path) => PipelineConfig::load(&path)?,
                None => PipelineConfig::default(),
            };
            let report = compare_devices(&profiles, &pipeline, gamma)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            if let Some(path) = out {
                write(&path, &json)?;
            }
            println!("{json}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { gammas, mc_steps } => {
            let options = SuiteOptions {
                seed: cli.seed.unwrap_or(0),
                gammas,
                mc_steps,
                ..SuiteOptions::default()
            };
            let summary = verify_suite(&options);
            for check in &summary.checks {
                let tag = if check.passed { "PASS" } else { "FAIL" };
                println!("[{tag}] {}: {}", check.name, check.detail);
            }
            match summary.first_failure() {
                None => Ok(ExitCode::SUCCESS),
                Some(fail) => {
                    eprintln!(
                        "counterexample ({}): {}",
                        fail.name,
                        fail.counterexample.as_deref().unwrap_or("n/a")
                    );
                    Ok(ExitCode::from(EXIT_INVARIANT))
                }
            }
        }
        Command::Amdahl { fraction, speedup } => {
            println!("fraction,verify_speedup,end_to_end");
            for &f in &fraction {
                for &s in &speedup {
                    println!("{f},{s},{:.4}", amdahl_end_to_end(f, s)?);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn write(path: &Path, body: &str) -> Result<(), Error> {
    std::fs::write(path, format!("{body}\n")).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
