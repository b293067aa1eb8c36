use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use puppy_client::holder::{self, LoadedBundle, VerifyOptions};
use puppy_client::http::ProverHttp;
use puppy_client::ClientError;

#[derive(Parser)]
#[command(name = "holder", about = "Verify a suspect asset against an ownership bundle")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run verification; exits 0 for Valid, 1 for Invalid.
    Verify {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        suspect: PathBuf,
        /// Prover wire address; defaults to the one recorded in the bundle.
        #[arg(long)]
        prover: Option<String>,
        /// Skip the result cache.
        #[arg(long)]
        no_cache: bool,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Show a prover's health and counters over HTTP.
    Status {
        #[arg(long)]
        http: String,
    },
}

fn verify(bundle: PathBuf, suspect: PathBuf, prover: Option<String>, no_cache: bool, json: bool) -> Result<i32, ClientError> {
    let loaded = LoadedBundle::load(&bundle)?;
    let suspect =
        std::fs::read(&suspect).map_err(|e| ClientError::Usage(format!("{}: {e}", suspect.display())))?;
    let prover = prover
        .or_else(|| loaded.bundle.prover.clone())
        .ok_or_else(|| ClientError::Usage("no --prover given and none in the bundle".into()))?;
    let mut opts = VerifyOptions::new(prover);
    opts.use_cache = !no_cache;
    let report = holder::verify(&loaded, &suspect, &opts)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serialization"));
    } else {
        println!("{}", report.verdict);
        if report.from_cache {
            println!("(answered from the prover's result cache)");
        }
        if let Some(t) = &report.timings {
            println!("{t}");
        }
        if let Some(m) = report.matches {
            println!("  matching pairs       {m}");
        }
        println!("  wall clock           {:>10.3} ms", report.wall_ns as f64 / 1e6);
    }
    Ok(report.verdict.exit_code())
}

fn status(addr: String) -> Result<i32, ClientError> {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    rt.block_on(async {
        let api = ProverHttp::new(&addr);
        let health = api.health().await?;
        let stats = api.stats().await?;
        println!("{}", serde_json::json!({ "health": health, "stats": stats }));
        Ok(0)
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let result = match cli.cmd {
        Cmd::Verify {
            bundle,
            suspect,
            prover,
            no_cache,
            json,
        } => verify(bundle, suspect, prover, no_cache, json),
        Cmd::Status { http } => status(http),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            // Attestation failures print exactly this prefix.
            eprintln!("holder: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
