//! Shared service state.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use anyhow::Context;
use puppy_core::asset::{Mode, Scheme, TokenRecord};
use puppy_core::cache::{CacheEntry, ProportionalCache, PutOutcome};
use puppy_core::crypto::{hmac_sha256_verify, AssetId};
use puppy_core::gc::verify::PAIR_BYTES;
use puppy_core::tee::keys::{unarmor_32, OWNER_PSK_LABEL};
use puppy_core::wire::ErrCode;
use serde::Serialize;
use zeroize::Zeroizing;

use crate::config::Config;
use crate::enclave_host::EnclaveHost;
use crate::ratelimit::RateLimiter;
use crate::store::{StoreError, TokenStore};
use crate::tap::Tap;

#[derive(Default)]
pub struct Stats {
    pub connections: AtomicU64,
    pub registered: AtomicU64,
    pub verify_sessions: AtomicU64,
    pub enclave_verify_calls: AtomicU64,
    pub tpc_sessions: AtomicU64,
    pub cache_hits: AtomicU64,
    pub cache_misses: AtomicU64,
    pub cache_puts: AtomicU64,
    pub aborts: AtomicU64,
    pub rejected_frames: AtomicU64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct StatsSnapshot {
    pub connections: u64,
    pub registered: u64,
    pub verify_sessions: u64,
    pub enclave_verify_calls: u64,
    pub tpc_sessions: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub cache_puts: u64,
    pub aborts: u64,
    pub rejected_frames: u64,
    pub tokens: u64,
    pub cache_len: u64,
}

pub(crate) fn bump(c: &AtomicU64) {
    c.fetch_add(1, Ordering::Relaxed);
}

pub struct AppState {
    pub cfg: Config,
    pub store: TokenStore,
    pub cache: Option<Mutex<ProportionalCache>>,
    pub enclave: Option<EnclaveHost>,
    pub limiter: Option<RateLimiter>,
    pub tap: Option<Tap>,
    pub stats: Stats,
    owner_psk: Zeroizing<[u8; 32]>,
}

impl AppState {
    pub fn new(cfg: Config) -> anyhow::Result<Self> {
        let psk_text = std::fs::read_to_string(&cfg.owner_psk)
            .with_context(|| format!("reading {}", cfg.owner_psk.display()))?;
        let owner_psk = unarmor_32(OWNER_PSK_LABEL, &psk_text).context("owner_psk")?;
        let store = TokenStore::open(&cfg.store).with_context(|| format!("opening {}", cfg.store.display()))?;
        let cache = cfg
            .cache
            .enabled
            .then(|| Mutex::new(ProportionalCache::new(cfg.cache.capacity, cfg.cache.threshold, cfg.cache.rule)));
        let enclave = if cfg.mode.uses_enclave() {
            Some(EnclaveHost::start(&cfg)?)
        } else {
            None
        };
        let limiter = cfg.rate_limit.map(RateLimiter::new);
        let tap = cfg.tap.as_deref().map(Tap::open).transpose().context("opening tap")?;
        Ok(Self {
            cfg,
            store,
            cache,
            enclave,
            limiter,
            tap,
            stats: Stats::default(),
            owner_psk,
        })
    }

    pub fn mode(&self) -> Mode {
        self.cfg.mode
    }

    /// Checks the owner MAC and the record's shape for this mode, then stores it.
    pub fn register(&self, record: TokenRecord, signed: &[u8], mac: &[u8]) -> Result<(), ErrCode> {
        if !hmac_sha256_verify(&*self.owner_psk, signed, mac) {
            return Err(ErrCode::Unauthorized);
        }
        let shape_ok = match self.mode() {
            Mode::Tee => record.c_sec.is_some(),
            Mode::TeeDirect => record.c_sec.is_none(),
            Mode::TwoPc => {
                record.c_sec.is_none()
                    && record.scheme == Scheme::FreqyWm
                    && record.share.len().is_multiple_of(PAIR_BYTES)
            }
        };
        if !shape_ok {
            return Err(ErrCode::Malformed);
        }
        let id = record.id;
        match self.store.insert(record) {
            Ok(()) => {
                bump(&self.stats.registered);
                tracing::info!(id = %id, "registered");
                Ok(())
            }
            Err(StoreError::Duplicate(_)) => Err(ErrCode::Duplicate),
            Err(e) => {
                tracing::error!(error = %e, "token store write failed");
                Err(ErrCode::Storage)
            }
        }
    }

    pub fn cache_get(&self, id: &AssetId, h: &[u8; 32], sim: f64) -> Option<bool> {
        let cache = self.cache.as_ref()?;
        let hit = cache.lock().unwrap().get(h, id, sim);
        bump(if hit.is_some() {
            &self.stats.cache_hits
        } else {
            &self.stats.cache_misses
        });
        hit
    }

    pub fn cache_put(&self, entry: CacheEntry) {
        if let Some(cache) = &self.cache {
            if !matches!(cache.lock().unwrap().put(entry), PutOutcome::Discarded) {
                bump(&self.stats.cache_puts);
            }
        }
    }

    pub fn cache_snapshot(&self) -> Option<String> {
        self.cache.as_ref().map(|c| c.lock().unwrap().snapshot_csv())
    }

    pub fn rate_ok(&self, id: &AssetId) -> bool {
        self.limiter.as_ref().is_none_or(|l| l.allow(id))
    }

    pub fn snapshot(&self) -> StatsSnapshot {
        let g = |c: &AtomicU64| c.load(Ordering::Relaxed);
        let s = &self.stats;
        StatsSnapshot {
            connections: g(&s.connections),
            registered: g(&s.registered),
            verify_sessions: g(&s.verify_sessions),
            enclave_verify_calls: g(&s.enclave_verify_calls),
            tpc_sessions: g(&s.tpc_sessions),
            cache_hits: g(&s.cache_hits),
            cache_misses: g(&s.cache_misses),
            cache_puts: g(&s.cache_puts),
            aborts: g(&s.aborts),
            rejected_frames: g(&s.rejected_frames),
            tokens: self.store.len() as u64,
            cache_len: self.cache.as_ref().map_or(0, |c| c.lock().unwrap().len() as u64),
        }
    }
}
