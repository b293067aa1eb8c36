//! Service configuration, read from TOML.
//!
//! ```toml
//! listen = "127.0.0.1:7700"
//! http_listen = "127.0.0.1:7701"
//! mode = "tee"                      # tee | tee-direct | 2pc; PUPPY_MODE overrides
//! store = "data/tokens.log"
//! manufacturer_key = "keys/manufacturer.key"
//! owner_psk = "keys/owner.key"
//!
//! [cache]
//! enabled = true
//! capacity = 100
//! threshold = 70.0
//! rule = "literal"
//!
//! [enclave]
//! kind = "subprocess"               # or "inprocess"
//! command = "/usr/local/bin/puppy-enclave"
//!
//! [verifier]
//! freqy_tolerance = 0
//! freqy_min_fraction = 0.6
//! obt_vote_threshold = 0.8
//! idgen_check = false
//!
//! [rate_limit]                      # optional; absent means unlimited
//! burst = 10
//! per_second = 1.0
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::Context;
use puppy_core::asset::{Mode, VerifierParams};
use puppy_core::cache::ServeRule;
use puppy_core::tee::{EnclaveConfig, EnclaveProgram};
use serde::{Deserialize, Serialize};

pub const MODE_ENV: &str = "PUPPY_MODE";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub listen: SocketAddr,
    #[serde(default)]
    pub http_listen: Option<SocketAddr>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    pub store: PathBuf,
    #[serde(default)]
    pub manufacturer_key: Option<PathBuf>,
    pub owner_psk: PathBuf,
    #[serde(default)]
    pub cache: CacheConfig,
    #[serde(default)]
    pub enclave: EnclaveHostConfig,
    #[serde(default)]
    pub verifier: VerifierConfig,
    #[serde(default)]
    pub rate_limit: Option<RateLimitConfig>,
    /// Seconds a connection may sit idle between frames.
    #[serde(default = "default_idle")]
    pub idle_timeout_secs: u64,
    /// When set, every frame the host sends or receives is appended here.
    #[serde(default)]
    pub tap: Option<PathBuf>,
}

fn default_mode() -> Mode {
    Mode::Tee
}

fn default_idle() -> u64 {
    30
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CacheConfig {
    pub enabled: bool,
    pub capacity: usize,
    pub threshold: f64,
    pub rule: ServeRule,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            capacity: 100,
            threshold: puppy_core::cache::proportional::DEFAULT_THRESHOLD,
            rule: ServeRule::Literal,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnclaveKind {
    #[default]
    Subprocess,
    Inprocess,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnclaveHostConfig {
    pub kind: EnclaveKind,
    /// Enclave binary; defaults to `puppy-enclave` next to the running executable.
    pub command: Option<PathBuf>,
    /// Arguments placed before the enclave's own flags.
    pub args: Vec<String>,
    pub env: Vec<(String, String)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifierConfig {
    pub freqy_tolerance: u64,
    pub freqy_min_fraction: f64,
    pub obt_vote_threshold: f64,
    pub idgen_check: bool,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        let p = VerifierParams::default();
        Self {
            freqy_tolerance: p.freqy_tolerance,
            freqy_min_fraction: p.freqy_min_fraction,
            obt_vote_threshold: p.obt_vote_threshold,
            idgen_check: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateLimitConfig {
    pub burst: u32,
    pub per_second: f64,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Config = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loopback configuration on ephemeral ports, storing data under `dir`.
    pub fn local(dir: &Path, mode: Mode, keys: &crate::keys::KeyFiles) -> Self {
        Self {
            listen: "127.0.0.1:0".parse().unwrap(),
            http_listen: Some("127.0.0.1:0".parse().unwrap()),
            mode,
            store: dir.join("tokens.log"),
            manufacturer_key: Some(keys.manufacturer_key.clone()),
            owner_psk: keys.owner_key.clone(),
            cache: CacheConfig::default(),
            enclave: EnclaveHostConfig::default(),
            verifier: VerifierConfig::default(),
            rate_limit: None,
            idle_timeout_secs: default_idle(),
            tap: None,
        }
    }

    /// Relative paths in the file are taken relative to the file itself.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.store);
        fix(&mut self.owner_psk);
        if let Some(p) = self.manufacturer_key.as_mut() {
            fix(p);
        }
        if let Some(p) = self.tap.as_mut() {
            fix(p);
        }
    }

    pub fn apply_env(&mut self) -> anyhow::Result<()> {
        if let Ok(m) = std::env::var(MODE_ENV) {
            self.mode = m.parse().map_err(|e| anyhow::anyhow!("{MODE_ENV}: {e}"))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.mode.uses_enclave() && self.manufacturer_key.is_none() {
            anyhow::bail!("mode {} needs manufacturer_key", self.mode);
        }
        if self.cache.enabled && self.cache.capacity == 0 {
            anyhow::bail!("cache.capacity must be at least 1");
        }
        if let Some(r) = self.rate_limit {
            if r.burst == 0 || !(r.per_second > 0.0) {
                anyhow::bail!("rate_limit needs burst >= 1 and per_second > 0");
            }
        }
        Ok(())
    }

    pub fn verifier_params(&self) -> VerifierParams {
        VerifierParams {
            freqy_tolerance: self.verifier.freqy_tolerance,
            freqy_min_fraction: self.verifier.freqy_min_fraction,
            obt_vote_threshold: self.verifier.obt_vote_threshold,
        }
    }

    /// The measured program this configuration runs.
    pub fn enclave_program(&self) -> EnclaveProgram {
        let mut c = EnclaveConfig::new(self.mode);
        c.verifier = self.verifier_params();
        c.idgen_check = self.verifier.idgen_check;
        EnclaveProgram::new(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
listen = "127.0.0.1:0"
store = "tokens.log"
manufacturer_key = "m.key"
owner_psk = "o.key"
"#;

    #[test]
    fn defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prover.toml");
        std::fs::write(&path, MINIMAL).unwrap();
        let cfg: Config = toml::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.mode, Mode::Tee);
        assert!(cfg.cache.enabled);
        assert_eq!(cfg.cache.capacity, 100);
        assert_eq!(cfg.enclave.kind, EnclaveKind::Subprocess);
        assert!(cfg.rate_limit.is_none());
        let mut cfg = cfg;
        cfg.resolve_paths(dir.path());
        assert_eq!(cfg.store, dir.path().join("tokens.log"));
    }

    #[test]
    fn validation() {
        let mut cfg: Config = toml::from_str(MINIMAL).unwrap();
        cfg.manufacturer_key = None;
        assert!(cfg.validate().is_err());
        cfg.mode = Mode::TwoPc;
        assert!(cfg.validate().is_ok());
        cfg.rate_limit = Some(RateLimitConfig { burst: 0, per_second: 1.0 });
        assert!(cfg.validate().is_err());
        assert!(toml::from_str::<Config>(&format!("{MINIMAL}\nbogus = 1")).is_err());
    }

    #[test]
    fn measurement_tracks_verifier_settings() {
        let mut cfg: Config = toml::from_str(MINIMAL).unwrap();
        let a = cfg.enclave_program().measurement();
        cfg.verifier.idgen_check = true;
        assert_ne!(a, cfg.enclave_program().measurement());
    }
}
