use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use puppy_prover::{Config, Server};

#[derive(Parser)]
#[command(name = "prover", about = "Watermark verification prover service")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a fresh manufacturer key pair and owner key.
    Keygen {
        #[arg(long)]
        out_dir: PathBuf,
        /// Replace existing key files.
        #[arg(long)]
        force: bool,
    },
    /// Print the enclave measurement a configuration runs.
    Measurement {
        #[arg(long)]
        config: PathBuf,
    },
}

fn keygen(out: &Path, force: bool) -> anyhow::Result<()> {
    let files = puppy_prover::keys::generate(out, force)?;
    for p in [&files.manufacturer_key, &files.manufacturer_pub, &files.owner_key] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Serve { config } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .with_writer(std::io::stderr)
                .init();
            let cfg = Config::load(&config)?;
            tokio::runtime::Runtime::new()?.block_on(async {
                let server = Server::start(cfg).await?;
                println!("listening {} http {}", server.addr, server.http_addr.map_or("-".to_string(), |a| a.to_string()));
                server.run_until_ctrl_c().await
            })
        }
        Cmd::Keygen { out_dir, force } => keygen(&out_dir, force),
        Cmd::Measurement { config } => {
            let cfg = Config::load(&config)?;
            println!("{}", hex::encode(cfg.enclave_program().measurement()));
            Ok(())
        }
    }
}
