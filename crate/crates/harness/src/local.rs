//! A prover on loopback with fresh keys, driven by the owner and holder
//! client libraries.

use anyhow::Context;
use puppy_client::owner::{self, PrepareOptions, Prepared};
use puppy_client::LoadedBundle;
use puppy_core::asset::{Mode, Scheme, TrustAnchor};
use puppy_prover::config::EnclaveHostConfig;
use puppy_prover::keys::KeyFiles;
use puppy_prover::{Config, Server, StatsSnapshot};
use rand::RngCore;
use zeroize::Zeroizing;

pub struct LocalProver {
    pub dir: tempfile::TempDir,
    pub keys: KeyFiles,
    pub cfg: Config,
    psk: Zeroizing<[u8; 32]>,
    rt: tokio::runtime::Runtime,
    server: Option<Server>,
}

impl LocalProver {
    pub fn start(mode: Mode, enclave: EnclaveHostConfig) -> anyhow::Result<Self> {
        Self::start_with(mode, |c| c.enclave = enclave)
    }

    pub fn start_with(mode: Mode, tweak: impl FnOnce(&mut Config)) -> anyhow::Result<Self> {
        let dir = tempfile::tempdir()?;
        let keys = puppy_prover::keys::generate(&dir.path().join("keys"), false)?;
        let mut cfg = Config::local(dir.path(), mode, &keys);
        tweak(&mut cfg);
        let psk = owner::read_owner_psk(&keys.owner_key)?;
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let server = rt.block_on(Server::start(cfg.clone())).context("starting prover")?;
        Ok(Self {
            dir,
            keys,
            cfg,
            psk,
            rt,
            server: Some(server),
        })
    }

    fn server(&self) -> &Server {
        self.server.as_ref().expect("running")
    }

    pub fn addr(&self) -> String {
        self.server().addr.to_string()
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.server().state.snapshot()
    }

    pub fn enclave_pid(&self) -> Option<u32> {
        self.server().state.enclave.as_ref().and_then(|e| e.child_pid())
    }

    pub fn trust(&self) -> anyhow::Result<TrustAnchor> {
        let m = hex::encode(self.cfg.enclave_program().measurement());
        Ok(owner::trust_anchor(&self.keys.manufacturer_pub, &m)?)
    }

    /// Watermarks and registers an asset; nothing is written to disk.
    pub fn generate<R: RngCore>(&self, asset: &[u8], scheme: Scheme, rng: &mut R) -> anyhow::Result<(Prepared, LoadedBundle)> {
        let mut opts = PrepareOptions::new(scheme, self.cfg.mode);
        if self.cfg.mode.uses_enclave() {
            opts.trust = Some(self.trust()?);
        }
        let mut p = owner::prepare(asset, &opts, rng)?;
        p.bundle.prover = Some(self.addr());
        owner::register(&self.addr(), &self.psk, &p.record)?;
        let loaded = LoadedBundle {
            bundle: p.bundle.clone(),
            watermarked: p.watermarked.clone(),
        };
        Ok((p, loaded))
    }
}

impl Drop for LocalProver {
    fn drop(&mut self) {
        if let Some(s) = self.server.take() {
            self.rt.block_on(s.stop());
        }
    }
}
