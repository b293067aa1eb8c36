//! Holder-side verification.
//!
//! With the cache enabled the holder first asks `CACHE_QRY(id, h', sim')`,
//! where `h'` is the MinHash bucket key of the suspect and `sim'` its Jaccard
//! similarity (percent) to the bundled watermarked asset. On a miss it runs
//! the full exchange for the bundle's mode.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use puppy_core::asset::{Asset, Mode, OwnershipBundle, VerifierParams};
use puppy_core::cache::{jaccard, phash, MinHashParams};
use puppy_core::crypto::verifying_key_from_bytes;
use puppy_core::freqywm::{preprocess, DetectParams};
use puppy_core::gc::HolderSession;
use puppy_core::tee::{AttestationReport, HolderHandshake};
use puppy_core::wire::{Message, SessionStats, VerifyRequest, VerifyResponse};
use rand::rngs::OsRng;
use serde::{Deserialize, Serialize};

use crate::conn::{unexpected, Conn};
use crate::error::ClientError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Valid,
    Invalid,
}

impl Verdict {
    pub fn from_res(res: bool) -> Self {
        if res {
            Verdict::Valid
        } else {
            Verdict::Invalid
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Valid => 0,
            Verdict::Invalid => 1,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Valid => "Valid",
            Verdict::Invalid => "Invalid",
        })
    }
}

/// The five verification tasks, in nanoseconds. Establishment is measured
/// by the holder; the rest are reported by the prover.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTimings {
    pub establish_ns: u64,
    pub receive_ns: u64,
    pub reconstruct_ns: u64,
    pub detect_ns: u64,
    pub terminate_ns: u64,
}

impl TaskTimings {
    pub const NAMES: [&'static str; 5] = [
        "establish session",
        "receive data",
        "reconstruct secret",
        "detect watermark",
        "terminate session",
    ];

    pub fn values(&self) -> [u64; 5] {
        [
            self.establish_ns,
            self.receive_ns,
            self.reconstruct_ns,
            self.detect_ns,
            self.terminate_ns,
        ]
    }

    pub fn total_ns(&self) -> u64 {
        self.values().iter().sum()
    }

    fn with_stats(establish_ns: u64, s: &SessionStats) -> Self {
        Self {
            establish_ns,
            receive_ns: s.receive_ns,
            reconstruct_ns: s.reconstruct_ns,
            detect_ns: s.detect_ns,
            terminate_ns: s.terminate_ns,
        }
    }
}

impl fmt::Display for TaskTimings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, v) in Self::NAMES.iter().zip(self.values()) {
            writeln!(f, "  {name:<20} {:>10.3} ms", v as f64 / 1e6)?;
        }
        write!(f, "  {:<20} {:>10.3} ms", "total", self.total_ns() as f64 / 1e6)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub verdict: Verdict,
    pub from_cache: bool,
    /// Present after an enclave verification.
    pub timings: Option<TaskTimings>,
    /// Matching pairs decoded by the garbled circuit, in 2PC mode.
    pub matches: Option<usize>,
    pub wall_ns: u64,
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub prover: String,
    pub use_cache: bool,
    /// Thresholds the holder applies in 2PC mode, where it sees the count.
    pub params: VerifierParams,
    pub minhash: MinHashParams,
}

impl VerifyOptions {
    pub fn new(prover: impl Into<String>) -> Self {
        Self {
            prover: prover.into(),
            use_cache: true,
            params: VerifierParams::default(),
            minhash: MinHashParams::default(),
        }
    }
}

/// A bundle together with the watermarked asset it points at.
pub struct LoadedBundle {
    pub bundle: OwnershipBundle,
    pub watermarked: Vec<u8>,
}

impl LoadedBundle {
    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let bytes = std::fs::read(path).map_err(|e| ClientError::Usage(format!("{}: {e}", path.display())))?;
        let bundle: OwnershipBundle =
            serde_json::from_slice(&bytes).map_err(|e| ClientError::Usage(format!("{}: {e}", path.display())))?;
        let asset_path = PathBuf::from(&bundle.asset_path);
        let asset_path = if asset_path.is_relative() {
            path.parent().unwrap_or(Path::new(".")).join(asset_path)
        } else {
            asset_path
        };
        let watermarked = std::fs::read(&asset_path)
            .map_err(|e| ClientError::Usage(format!("{}: {e}", asset_path.display())))?;
        Ok(Self { bundle, watermarked })
    }
}

/// Cache key and similarity for a suspect, if it parses under the scheme.
pub fn cache_key(
    bundle: &OwnershipBundle,
    watermarked: &[u8],
    suspect: &[u8],
    params: &MinHashParams,
) -> Option<([u8; 32], f64)> {
    let s = Asset::parse(bundle.scheme, suspect).ok()?;
    let w = Asset::parse(bundle.scheme, watermarked).ok()?;
    Some((phash(&s, params), jaccard(&w, &s)))
}

fn elapsed_ns(t: Instant) -> u64 {
    t.elapsed().as_nanos() as u64
}

pub fn verify(loaded: &LoadedBundle, suspect: &[u8], opts: &VerifyOptions) -> Result<VerifyReport, ClientError> {
    let start = Instant::now();
    let bundle = &loaded.bundle;
    let tkh = bundle.holder_share().map_err(|e| ClientError::Usage(e.to_string()))?;
    // Check the trust anchor before any connection is made.
    let anchor = match bundle.mode {
        Mode::Tee | Mode::TeeDirect => Some(parse_anchor(bundle)?),
        Mode::TwoPc => None,
    };
    let key = if opts.use_cache {
        cache_key(bundle, &loaded.watermarked, suspect, &opts.minhash)
    } else {
        None
    };

    let mut conn = Conn::connect(&opts.prover)?;
    if let Some((h, sim)) = key {
        match conn.call(&Message::CacheQry { id: bundle.id, h, sim })? {
            Message::CacheRes { present: true, res } => {
                return Ok(VerifyReport {
                    verdict: Verdict::from_res(res),
                    from_cache: true,
                    timings: None,
                    matches: None,
                    wall_ns: elapsed_ns(start),
                });
            }
            Message::CacheRes { present: false, .. } => {}
            other => return Err(unexpected("CACHE_RES", &other)),
        }
    }

    let mut report = match anchor {
        Some((pvk, measurement)) => {
            let (res, timings) = verify_enclave(&mut conn, bundle, &tkh, suspect, &pvk, &measurement)?;
            VerifyReport {
                verdict: Verdict::from_res(res),
                from_cache: false,
                timings: Some(timings),
                matches: None,
                wall_ns: 0,
            }
        }
        None => {
            let matches = verify_2pc(&mut conn, bundle, &tkh, suspect, &opts.params)?;
            let pairs = tkh.len() / puppy_core::gc::verify::PAIR_BYTES;
            let k = DetectParams::for_pairs(pairs, opts.params.freqy_tolerance, opts.params.freqy_min_fraction).min_pairs;
            let res = matches >= k;
            if let Some((h, sim)) = key {
                match conn.call(&Message::CacheReport { id: bundle.id, h, sim, res })? {
                    Message::Ack | Message::Err(_) => {}
                    other => return Err(unexpected("ACK", &other)),
                }
            }
            VerifyReport {
                verdict: Verdict::from_res(res),
                from_cache: false,
                timings: None,
                matches: Some(matches),
                wall_ns: 0,
            }
        }
    };
    report.wall_ns = elapsed_ns(start);
    Ok(report)
}

fn parse_anchor(bundle: &OwnershipBundle) -> Result<(puppy_core::crypto::VerifyingKey, [u8; 32]), ClientError> {
    let trust = bundle
        .trust
        .as_ref()
        .ok_or_else(|| ClientError::Usage("bundle has no trust anchor for an enclave mode".into()))?;
    let pvk = B64
        .decode(&trust.manufacturer_pvk)
        .ok()
        .and_then(|b| verifying_key_from_bytes(&b).ok())
        .ok_or_else(|| ClientError::Usage("bad manufacturer key in bundle".into()))?;
    let measurement: [u8; 32] = hex::decode(&trust.measurement)
        .ok()
        .and_then(|m| m.try_into().ok())
        .ok_or_else(|| ClientError::Usage("bad measurement in bundle".into()))?;
    Ok((pvk, measurement))
}

fn verify_enclave(
    conn: &mut Conn,
    bundle: &OwnershipBundle,
    tkh: &[u8],
    suspect: &[u8],
    pvk: &puppy_core::crypto::VerifyingKey,
    measurement: &[u8; 32],
) -> Result<(bool, TaskTimings), ClientError> {
    let t_establish = Instant::now();
    let hs = HolderHandshake::new();
    let report = match conn.call(&Message::RaHello { nonce: hs.nonce() })? {
        Message::RaReport { measurement, epk, sig } => AttestationReport { measurement, epk, sig },
        other => return Err(unexpected("RA_REPORT", &other)),
    };
    // On failure nothing else is sent; dropping the connection ends the session.
    let est = hs
        .complete(&report, pvk, measurement)
        .map_err(|e| ClientError::Attestation(e.to_string()))?;
    let mut channel = est.channel;
    match conn.call(&Message::RaFinish {
        client_epk: est.client_epk,
        mac: est.mac,
    })? {
        Message::Ack => {}
        other => return Err(unexpected("ACK", &other)),
    }
    let establish_ns = elapsed_ns(t_establish);

    let req = VerifyRequest {
        id: bundle.id,
        dw: suspect.to_vec(),
        tkh: tkh.to_vec(),
    };
    let plain = zeroize::Zeroizing::new(req.encode());
    drop(req);
    let sealed = channel.seal(&plain);
    drop(plain);
    let res = match conn.call(&Message::VerifyReq(sealed))? {
        Message::VerifyRes(sealed) => {
            let plain = channel
                .open(&sealed)
                .map_err(|e| ClientError::Protocol(format!("sealed response: {e}")))?;
            VerifyResponse::decode(&plain)
                .map_err(|e| ClientError::Protocol(e.to_string()))?
                .res
        }
        other => return Err(unexpected("VERIFY_RES", &other)),
    };
    let stats = match conn.recv()? {
        Message::SessionStats(s) => s,
        other => return Err(unexpected("SESSION_STATS", &other)),
    };
    Ok((res, TaskTimings::with_stats(establish_ns, &stats)))
}

fn verify_2pc(
    conn: &mut Conn,
    bundle: &OwnershipBundle,
    tkh: &[u8],
    suspect: &[u8],
    params: &VerifierParams,
) -> Result<usize, ClientError> {
    let Ok(Asset::Tokens(d)) = Asset::parse(bundle.scheme, suspect) else {
        return Err(ClientError::Asset("suspect is not a token dataset".into()));
    };
    let tolerance = u32::try_from(params.freqy_tolerance).map_err(|_| ClientError::Usage("tolerance too large".into()))?;
    let gc = |e: puppy_core::gc::GcError| ClientError::Protocol(e.to_string());
    let (mut session, hello) = HolderSession::start(bundle.id, tkh, &preprocess(&d), tolerance).map_err(gc)?;
    let garbled = conn.call(&hello)?;
    session.on_garbled(garbled).map_err(gc)?;
    let init = conn.recv()?;
    let choice = session.on_sender_init(init, &mut OsRng).map_err(gc)?;
    let payload = conn.call(&choice)?;
    session.on_payload(payload).map_err(gc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timings_table_lists_every_task() {
        let t = TaskTimings {
            establish_ns: 1_000_000,
            receive_ns: 2_000_000,
            reconstruct_ns: 3_000_000,
            detect_ns: 4_000_000,
            terminate_ns: 5_000_000,
        };
        assert_eq!(t.total_ns(), 15_000_000);
        let s = t.to_string();
        for name in TaskTimings::NAMES {
            assert!(s.contains(name), "{name} missing from {s}");
        }
        assert!(s.contains("15.000 ms"));
    }

    #[test]
    fn verdict_codes() {
        assert_eq!(Verdict::from_res(true).exit_code(), 0);
        assert_eq!(Verdict::from_res(false).exit_code(), 1);
        assert_eq!(Verdict::Valid.to_string(), "Valid");
    }
}
