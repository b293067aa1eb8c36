//! Untrusted-host side of the enclave: owns the link and hands out session ids.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::Context;
use puppy_core::tee::program::{ENTRY_ERASE, ENTRY_FINISH, ENTRY_INIT, ENTRY_OPEN, ENTRY_VERIFY};
use puppy_core::tee::{ChildLink, ChildOptions, EnclaveLink, VerifyOutcome};
use puppy_core::wire::AbortCode;

use crate::config::{Config, EnclaveKind};

pub const ENCLAVE_BIN: &str = "puppy-enclave";

pub struct EnclaveHost {
    link: Arc<Mutex<Box<dyn EnclaveLink>>>,
    next_session: AtomicU64,
    measurement: [u8; 32],
    child_pid: Option<u32>,
}

/// Looks for the enclave binary next to the running executable, then one
/// directory up (test binaries live in `deps/`).
fn default_enclave_command() -> anyhow::Result<PathBuf> {
    let exe = std::env::current_exe()?;
    let mut dir = exe.parent();
    for _ in 0..2 {
        let Some(d) = dir else { break };
        let candidate = d.join(ENCLAVE_BIN);
        if candidate.is_file() {
            return Ok(candidate);
        }
        dir = d.parent();
    }
    anyhow::bail!("cannot find {ENCLAVE_BIN} next to {}; set enclave.command", exe.display())
}

impl EnclaveHost {
    pub fn start(cfg: &Config) -> anyhow::Result<Self> {
        let opts = ChildOptions {
            manufacturer_key: cfg.manufacturer_key.clone().context("manufacturer_key is not set")?,
            program: cfg.enclave_program(),
        };
        let measurement = opts.program.measurement();
        let (link, child_pid): (Box<dyn EnclaveLink>, _) = match cfg.enclave.kind {
            EnclaveKind::Inprocess => (Box::new(opts.load_enclave().map_err(anyhow::Error::msg)?), None),
            EnclaveKind::Subprocess => {
                let command = match &cfg.enclave.command {
                    Some(c) => c.clone(),
                    None => default_enclave_command()?,
                };
                let child = ChildLink::spawn(&command, &cfg.enclave.args, &cfg.enclave.env, &opts)
                    .with_context(|| format!("spawning {}", command.display()))?;
                let pid = child.pid();
                (Box::new(child), Some(pid))
            }
        };
        Ok(Self {
            link: Arc::new(Mutex::new(link)),
            next_session: AtomicU64::new(1),
            measurement,
            child_pid,
        })
    }

    pub fn measurement(&self) -> [u8; 32] {
        self.measurement
    }

    pub fn child_pid(&self) -> Option<u32> {
        self.child_pid
    }

    pub fn new_session(&self) -> u64 {
        self.next_session.fetch_add(1, Ordering::Relaxed)
    }

    async fn call(&self, session: u64, entry: &'static str, params: Vec<u8>) -> Result<Vec<u8>, AbortCode> {
        let link = self.link.clone();
        tokio::task::spawn_blocking(move || link.lock().unwrap().resume(session, entry, &params))
            .await
            .unwrap_or(Err(AbortCode::Internal))
    }

    pub async fn init(&self, session: u64, nonce: [u8; 32]) -> Result<Vec<u8>, AbortCode> {
        self.call(session, ENTRY_INIT, nonce.to_vec()).await
    }

    pub async fn finish(&self, session: u64, client_epk: [u8; 32], mac: [u8; 16]) -> Result<(), AbortCode> {
        let mut p = client_epk.to_vec();
        p.extend_from_slice(&mac);
        self.call(session, ENTRY_FINISH, p).await.map(drop)
    }

    /// Opens a sealed request and returns the asset id it names.
    pub async fn open(&self, session: u64, sealed: Vec<u8>) -> Result<[u8; 32], AbortCode> {
        let out = self.call(session, ENTRY_OPEN, sealed).await?;
        out.try_into().map_err(|_| AbortCode::Internal)
    }

    pub async fn verify(&self, session: u64, opt_in: bool, record: Vec<u8>) -> Result<VerifyOutcome, AbortCode> {
        let mut p = Vec::with_capacity(1 + record.len());
        p.push(opt_in as u8);
        p.extend_from_slice(&record);
        let out = self.call(session, ENTRY_VERIFY, p).await?;
        VerifyOutcome::decode(&out).ok_or(AbortCode::Internal)
    }

    pub async fn erase(&self, session: u64) {
        let _ = self.call(session, ENTRY_ERASE, Vec::new()).await;
    }
}
