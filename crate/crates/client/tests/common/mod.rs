#![allow(dead_code)]

use std::path::{Path, PathBuf};

use puppy_core::asset::Mode;
use puppy_core::freqywm::TokenDataset;
use puppy_prover::config::EnclaveKind;
use puppy_prover::keys::KeyFiles;
use puppy_prover::{Config, Server};
use rand::{RngCore, SeedableRng};

/// A prover with an in-process enclave on a private runtime.
pub struct Prover {
    pub dir: tempfile::TempDir,
    pub keys: KeyFiles,
    pub cfg: Config,
    rt: tokio::runtime::Runtime,
    server: Option<Server>,
}

impl Prover {
    pub fn start(mode: Mode) -> Self {
        Self::start_with(mode, |_| {})
    }

    pub fn start_with(mode: Mode, tweak: impl FnOnce(&mut Config)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let keys = puppy_prover::keys::generate(&dir.path().join("keys"), false).unwrap();
        let mut cfg = Config::local(dir.path(), mode, &keys);
        cfg.enclave.kind = EnclaveKind::Inprocess;
        tweak(&mut cfg);
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        let server = rt.block_on(Server::start(cfg.clone())).unwrap();
        Self {
            dir,
            keys,
            cfg,
            rt,
            server: Some(server),
        }
    }

    pub fn addr(&self) -> String {
        self.server.as_ref().unwrap().addr.to_string()
    }

    pub fn http(&self) -> String {
        self.server.as_ref().unwrap().http_addr.unwrap().to_string()
    }

    pub fn measurement_hex(&self) -> String {
        hex::encode(self.cfg.enclave_program().measurement())
    }

    pub fn stats(&self) -> puppy_prover::StatsSnapshot {
        self.server.as_ref().unwrap().state.snapshot()
    }

    pub fn work(&self) -> PathBuf {
        let p = self.dir.path().join("work");
        std::fs::create_dir_all(&p).unwrap();
        p
    }
}

impl Drop for Prover {
    fn drop(&mut self) {
        if let Some(s) = self.server.take() {
            self.rt.block_on(s.stop());
        }
    }
}

/// A long-tailed token list, one token per line.
pub fn tokens(seed: u64, n: usize) -> Vec<u8> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let words: Vec<String> = (0..n)
        .map(|_| {
            let u = rng.next_u32() as f64 / u32::MAX as f64;
            format!("w{}", (u * u * u * 400.0) as u32)
        })
        .collect();
    TokenDataset::from_strs(&words).to_bytes()
}

/// Zero-centred values; the bit of a partition is the sign of its mean.
pub fn table(seed: u64, rows: usize) -> Vec<u8> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    puppy_core::obt::NumericTable::gaussian(rows, 0.0, 1.0, &mut rng).to_csv()
}

pub fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p
}
