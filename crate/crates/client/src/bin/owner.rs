use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use puppy_client::owner::{self, IdChoice, PrepareOptions};
use puppy_client::ClientError;
use puppy_core::asset::{Mode, Scheme};

#[derive(Parser)]
#[command(name = "owner", about = "Watermark an asset and register its tokens with a prover")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Watermark, derive tokens, register with the prover and write the bundle.
    Generate(GenerateArgs),
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long)]
    asset: PathBuf,
    #[arg(long)]
    scheme: Scheme,
    #[arg(long)]
    out_dir: PathBuf,
    /// Prover wire address, host:port.
    #[arg(long)]
    prover: String,
    #[arg(long, default_value = "tee")]
    mode: Mode,
    /// Armored owner key shared with the prover.
    #[arg(long)]
    owner_key: PathBuf,
    /// Armored manufacturer public key (tee modes).
    #[arg(long)]
    manufacturer_pub: Option<PathBuf>,
    /// Hex enclave measurement to pin (tee modes); see `prover measurement`.
    #[arg(long)]
    measurement: Option<String>,
    /// Owner label fed into the id derivation.
    #[arg(long, default_value = "owner")]
    owner_label: String,
    /// ISO-8601 day for the id derivation; defaults to today (UTC).
    #[arg(long)]
    date: Option<String>,
    /// Use a random id instead of a derived one.
    #[arg(long, conflicts_with_all = ["owner_label", "date"])]
    random_id: bool,
    /// Free-text usage policy recorded in the bundle.
    #[arg(long)]
    policy: Option<String>,
    /// Number of FreqyWM pairs to embed.
    #[arg(long)]
    pairs: Option<usize>,
}

fn run(a: GenerateArgs) -> Result<(), ClientError> {
    let asset = std::fs::read(&a.asset).map_err(|e| ClientError::Usage(format!("{}: {e}", a.asset.display())))?;
    let mut opts = PrepareOptions::new(a.scheme, a.mode);
    opts.id = if a.random_id {
        IdChoice::Random
    } else {
        IdChoice::Derived {
            owner: a.owner_label,
            date: a.date.unwrap_or_else(owner::today),
        }
    };
    if let Some(p) = a.pairs {
        opts.insert.freqy.num_pairs = p;
    }
    opts.policy = a.policy;
    if a.mode.uses_enclave() {
        let (Some(pubkey), Some(m)) = (&a.manufacturer_pub, &a.measurement) else {
            return Err(ClientError::Usage(format!(
                "mode {} needs --manufacturer-pub and --measurement",
                a.mode
            )));
        };
        opts.trust = Some(owner::trust_anchor(pubkey, m)?);
    }
    let psk = owner::read_owner_psk(&a.owner_key)?;
    let p = owner::generate(&asset, &opts, &a.prover, &psk, &a.out_dir, &mut rand::rngs::OsRng)?;
    println!("registered {}", p.id);
    println!("bundle {}", a.out_dir.join(owner::BUNDLE_FILE).display());
    Ok(())
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
        Cmd::Generate(a) => run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("owner: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
