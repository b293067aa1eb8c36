use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use puppy_core::asset::Scheme;
use puppy_harness::cache_study::{self, CacheStudy, Policy};
use puppy_harness::latency::{self, LatencyOptions, RunMode};

#[derive(Parser)]
#[command(name = "harness", about = "Cache hit-ratio study and verification latency breakdown")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Hit ratio of LRU-Base, LRU-Base-R and LRU-Prop per capacity; writes cache.csv.
    Cache {
        #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 50, 100, 250])]
        capacities: Vec<usize>,
        #[arg(long, default_value_t = 250)]
        pairs: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Requests per trial.
        #[arg(long, default_value_t = 1000)]
        requests: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean per-task latency over repeated verifications; writes latency-<scheme>-<mode>.csv.
    Latency {
        #[arg(long)]
        scheme: Scheme,
        #[arg(long, value_enum)]
        mode: RunMode,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Enclave binary for tee mode; defaults to puppy-enclave beside this program.
        #[arg(long)]
        enclave: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Cache {
            capacities,
            pairs,
            trials,
            requests,
            seed,
            out,
        } => {
            let study = CacheStudy {
                capacities,
                pairs,
                trials,
                requests,
                seed,
                ..CacheStudy::default()
            };
            let cells = cache_study::run(&study);
            std::fs::create_dir_all(&out)?;
            let path = out.join("cache.csv");
            std::fs::write(&path, cache_study::to_csv(&cells)).with_context(|| path.display().to_string())?;
            for p in Policy::ALL {
                println!("{:<11} mean HR {:.4}", p.name(), cache_study::policy_mean(&cells, p));
            }
            println!("wrote {}", path.display());
        }
        Cmd::Latency {
            scheme,
            mode,
            runs,
            seed,
            enclave,
            out,
        } => {
            let mut o = LatencyOptions::new(scheme, mode);
            o.runs = runs;
            o.seed = seed;
            o.enclave.command = enclave;
            let t = latency::run(&o)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join(format!("latency-{scheme}-{}.csv", mode.name()));
            let csv = latency::to_csv(&[t]);
            std::fs::write(&path, &csv).with_context(|| path.display().to_string())?;
            print!("{csv}");
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("harness: {e:#}");
            ExitCode::FAILURE
        }
    }
}
