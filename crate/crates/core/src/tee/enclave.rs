//! In-memory enclave context with controlled invocation.
//!
//! The host drives a session through named entry points:
//!
//! | entry    | params                           | output                                   |
//! |----------|----------------------------------|------------------------------------------|
//! | `init`   | client nonce (32)                | attestation report (128)                 |
//! | `finish` | client epk (32) `\|\|` mac (16)  | empty                                    |
//! | `open`   | sealed `VERIFY_REQ`              | asset id (32)                            |
//! | `verify` | cache opt-in u8 `\|\|` record    | [`VerifyOutcome`] encoding               |
//! | `erase`  | empty                            | empty                                    |
//!
//! Any failing call erases the session before returning its abort code.

use std::collections::HashMap;
use std::time::Instant;

use rand::rngs::OsRng;
use x25519_dalek::{PublicKey, StaticSecret};
use zeroize::Zeroizing;

use super::attest::{derive_keys, finish_mac, macs_equal, report_message, AttestationReport};
use super::channel::{ChannelError, SecureChannel};
use super::program::*;
use crate::asset::{self, Asset, Mode, SecretEnvelope, TokenRecord};
use crate::crypto::{AuthCiphertext, SigningKeypair};
use crate::wire::{AbortCode, Cursor, VerifyRequest, VerifyResponse};

/// Abstraction over where the enclave runs.
pub trait EnclaveLink: Send {
    fn resume(&mut self, session: u64, entry: &str, params: &[u8]) -> Result<Vec<u8>, AbortCode>;
}

/// Decoded output of the `verify` entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyOutcome {
    /// The result in the clear, present only when the holder opted into caching.
    pub res_clear: Option<bool>,
    pub reconstruct_ns: u64,
    pub detect_ns: u64,
    pub terminate_ns: u64,
    /// Sealed `VERIFY_RES` payload for the holder.
    pub sealed: Vec<u8>,
}

impl VerifyOutcome {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(25 + self.sealed.len());
        out.push(match self.res_clear {
            None => 0xFF,
            Some(r) => r as u8,
        });
        out.extend_from_slice(&self.reconstruct_ns.to_be_bytes());
        out.extend_from_slice(&self.detect_ns.to_be_bytes());
        out.extend_from_slice(&self.terminate_ns.to_be_bytes());
        out.extend_from_slice(&self.sealed);
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        let mut c = Cursor::new(bytes);
        let res_clear = match c.u8().ok()? {
            0 => Some(false),
            1 => Some(true),
            0xFF => None,
            _ => return None,
        };
        Some(Self {
            res_clear,
            reconstruct_ns: c.u64().ok()?,
            detect_ns: c.u64().ok()?,
            terminate_ns: c.u64().ok()?,
            sealed: c.rest().to_vec(),
        })
    }
}

struct Session {
    nonce: [u8; 32],
    secret: Option<StaticSecret>,
    epk: [u8; 32],
    channel: Option<SecureChannel>,
    pending: Option<VerifyRequest>,
}

pub struct Enclave {
    program: EnclaveProgram,
    measurement: [u8; 32],
    manufacturer: SigningKeypair,
    sessions: HashMap<u64, Session>,
    verify_calls: u64,
}

fn elapsed_ns(t: Instant) -> u64 {
    t.elapsed().as_nanos().min(u64::MAX as u128) as u64
}

impl Enclave {
    pub fn new(program: EnclaveProgram, manufacturer: SigningKeypair) -> Self {
        Self {
            measurement: program.measurement(),
            program,
            manufacturer,
            sessions: HashMap::new(),
            verify_calls: 0,
        }
    }

    pub fn measurement(&self) -> [u8; 32] {
        self.measurement
    }

    pub fn program(&self) -> &EnclaveProgram {
        &self.program
    }

    /// Number of completed or attempted `verify` invocations.
    pub fn verify_calls(&self) -> u64 {
        self.verify_calls
    }

    pub fn live_sessions(&self) -> usize {
        self.sessions.len()
    }

    /// Every byte the enclave currently holds for live sessions. Test probe.
    pub fn state_dump(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for s in self.sessions.values() {
            out.extend_from_slice(&s.nonce);
            out.extend_from_slice(&s.epk);
            if let Some(sk) = &s.secret {
                out.extend_from_slice(&sk.to_bytes());
            }
            if let Some(ch) = &s.channel {
                out.extend_from_slice(ch.key_bytes());
            }
            if let Some(p) = &s.pending {
                out.extend_from_slice(&p.id.0);
                out.extend_from_slice(&p.dw);
                out.extend_from_slice(&p.tkh);
            }
        }
        out
    }

    pub fn erase(&mut self, session: u64) {
        // Dropping the session zeroizes the ephemeral secret, the channel key
        // and the pending request.
        self.sessions.remove(&session);
    }

    pub fn resume(&mut self, session: u64, entry: &str, params: &[u8]) -> Result<Vec<u8>, AbortCode> {
        let result = match entry {
            ENTRY_INIT => self.init(session, params),
            ENTRY_FINISH => self.finish(session, params),
            ENTRY_OPEN => self.open(session, params),
            ENTRY_VERIFY => self.verify(session, params),
            ENTRY_ERASE => {
                self.erase(session);
                Ok(Vec::new())
            }
            _ => Err(AbortCode::Unsupported),
        };
        if result.is_err() {
            self.erase(session);
        }
        result
    }

    fn init(&mut self, session: u64, params: &[u8]) -> Result<Vec<u8>, AbortCode> {
        let nonce: [u8; 32] = params.try_into().map_err(|_| AbortCode::BadFrame)?;
        if self.sessions.contains_key(&session) {
            return Err(AbortCode::BadFrame);
        }
        let secret = StaticSecret::random_from_rng(OsRng);
        let epk = PublicKey::from(&secret).to_bytes();
        let sig = self
            .manufacturer
            .sign(&report_message(&self.measurement, &epk, &nonce))
            .to_bytes();
        self.sessions.insert(
            session,
            Session {
                nonce,
                secret: Some(secret),
                epk,
                channel: None,
                pending: None,
            },
        );
        let report = AttestationReport {
            measurement: self.measurement,
            epk,
            sig,
        };
        Ok(report.encode().to_vec())
    }

    fn finish(&mut self, session: u64, params: &[u8]) -> Result<Vec<u8>, AbortCode> {
        if params.len() != 48 {
            return Err(AbortCode::BadFrame);
        }
        let client_epk: [u8; 32] = params[..32].try_into().unwrap();
        let mac: [u8; 16] = params[32..].try_into().unwrap();
        let measurement = self.measurement;
        let s = self.sessions.get_mut(&session).ok_or(AbortCode::BadFrame)?;
        let secret = s.secret.take().ok_or(AbortCode::BadFrame)?;
        let shared = secret.diffie_hellman(&PublicKey::from(client_epk));
        drop(secret);
        if !shared.was_contributory() {
            return Err(AbortCode::Attestation);
        }
        let keys = derive_keys(shared.as_bytes(), &s.nonce, &measurement, &s.epk, &client_epk);
        let expected = finish_mac(&keys.finish, &s.nonce, &s.epk, &client_epk);
        if !macs_equal(&expected, &mac) {
            return Err(AbortCode::Attestation);
        }
        s.channel = Some(SecureChannel::enclave(keys.session));
        Ok(Vec::new())
    }

    fn open(&mut self, session: u64, params: &[u8]) -> Result<Vec<u8>, AbortCode> {
        let s = self.sessions.get_mut(&session).ok_or(AbortCode::BadFrame)?;
        let ch = s.channel.as_mut().ok_or(AbortCode::BadFrame)?;
        let plain = ch.open(params).map_err(|e| match e {
            ChannelError::Replay(_) => AbortCode::Replay,
            _ => AbortCode::BadFrame,
        })?;
        if s.pending.is_some() {
            return Err(AbortCode::BadFrame);
        }
        let req = VerifyRequest::decode(&plain).map_err(|_| AbortCode::BadFrame)?;
        let id = req.id;
        s.pending = Some(req);
        Ok(id.0.to_vec())
    }

    fn verify(&mut self, session: u64, params: &[u8]) -> Result<Vec<u8>, AbortCode> {
        self.verify_calls += 1;
        let (&opt_in, record) = params.split_first().ok_or(AbortCode::BadFrame)?;
        let record = TokenRecord::decode(record).map_err(|_| AbortCode::Internal)?;
        let config = self.program.config.clone();
        let s = self.sessions.get_mut(&session).ok_or(AbortCode::BadFrame)?;
        let req = s.pending.take().ok_or(AbortCode::BadFrame)?;
        if record.id != req.id {
            return Err(AbortCode::Internal);
        }

        let t_reconstruct = Instant::now();
        let c_sec = match (config.mode, &record.c_sec) {
            (Mode::Tee, Some(c)) => Some(AuthCiphertext::from_bytes(c).map_err(|_| AbortCode::DecryptFailed)?),
            (Mode::TeeDirect, None) => None,
            _ => return Err(AbortCode::Unsupported),
        };
        let plain: Zeroizing<Vec<u8>> =
            asset::recover_secret(&req.tkh, &record.share, c_sec.as_ref()).map_err(|_| AbortCode::DecryptFailed)?;
        let envelope = SecretEnvelope::from_bytes(&plain).map_err(|_| AbortCode::DecryptFailed)?;
        drop(plain);
        let reconstruct_ns = elapsed_ns(t_reconstruct);

        if envelope.secret.scheme() != record.scheme {
            return Err(AbortCode::DecryptFailed);
        }
        if config.idgen_check {
            if let Some(binding) = &envelope.binding {
                if binding.id_for(&req.dw) != req.id {
                    return Err(AbortCode::IdgenMismatch);
                }
            }
        }

        let t_detect = Instant::now();
        // An asset that does not even parse under the scheme cannot carry the watermark.
        let res = Asset::parse(record.scheme, &req.dw)
            .ok()
            .and_then(|a| asset::detect(&a, &envelope.secret, &config.verifier).ok())
            .unwrap_or(false);
        let detect_ns = elapsed_ns(t_detect);

        let ch = s.channel.as_mut().ok_or(AbortCode::BadFrame)?;
        let sealed = ch.seal(&VerifyResponse { res }.encode());

        let t_terminate = Instant::now();
        drop(envelope);
        drop(req);
        self.erase(session);
        let terminate_ns = elapsed_ns(t_terminate);

        Ok(VerifyOutcome {
            res_clear: (opt_in == 1).then_some(res),
            reconstruct_ns,
            detect_ns,
            terminate_ns,
            sealed,
        }
        .encode())
    }
}

impl EnclaveLink for Enclave {
    fn resume(&mut self, session: u64, entry: &str, params: &[u8]) -> Result<Vec<u8>, AbortCode> {
        Enclave::resume(self, session, entry, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asset::{derive_tokens, IdBinding, InsertOptions, Scheme, WatermarkSecret};
    use crate::crypto::AssetId;
    use crate::freqywm::TokenDataset;
    use crate::tee::attest::HolderHandshake;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        enclave: Enclave,
        maker: crate::crypto::VerifyingKey,
        dw: Vec<u8>,
        unrelated: Vec<u8>,
        secret_json: Vec<u8>,
        tkh: Vec<u8>,
        record: TokenRecord,
    }

    fn fixture(mode: Mode, idgen_check: bool, binding_owner: &str) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let tokens: Vec<String> = (0..6_000).map(|i| format!("tok-{}-{}", i % 500, i % 7)).collect();
        let asset = Asset::Tokens(TokenDataset::from_strs(&tokens));
        let (dw, secret) = asset::watermark(&asset, &InsertOptions::default(), &mut rng).unwrap();
        let dw = dw.to_bytes();
        let binding = IdBinding {
            owner: binding_owner.into(),
            date: "2026-10-17".into(),
        };
        let id = binding.id_for(&dw);
        let env = SecretEnvelope {
            secret: secret.clone(),
            binding: Some(binding),
        };
        let tokens = derive_tokens(mode, &env.to_bytes()).unwrap();
        let record = TokenRecord::new(id, Scheme::FreqyWm, &tokens);
        let maker = SigningKeypair::generate();
        let pvk = maker.verifying_key();
        let mut config = EnclaveConfig::new(mode);
        config.idgen_check = idgen_check;
        let unrelated: Vec<String> = (0..3_000).map(|i| format!("other-{}", i % 300)).collect();
        Fixture {
            enclave: Enclave::new(EnclaveProgram::new(config), maker),
            maker: pvk,
            dw,
            unrelated: TokenDataset::from_strs(&unrelated).to_bytes(),
            secret_json: match secret {
                WatermarkSecret::FreqyWm(s) => s.to_json(),
                WatermarkSecret::Obt(s) => s.to_json(),
            },
            tkh: tokens.holder.as_bytes().to_vec(),
            record,
        }
    }

    /// Runs the handshake and `open`, returning the holder channel.
    fn establish(f: &mut Fixture, session: u64, dw: &[u8]) -> SecureChannel {
        let hs = HolderHandshake::new();
        let report = f.enclave.resume(session, ENTRY_INIT, &hs.nonce()).unwrap();
        let report = AttestationReport::decode(&report).unwrap();
        let m = f.enclave.measurement();
        let est = hs.complete(&report, &f.maker, &m).unwrap();
        let mut fin = est.client_epk.to_vec();
        fin.extend_from_slice(&est.mac);
        f.enclave.resume(session, ENTRY_FINISH, &fin).unwrap();
        let mut ch = est.channel;
        let req = VerifyRequest {
            id: f.record.id,
            dw: dw.to_vec(),
            tkh: f.tkh.clone(),
        };
        let id = f.enclave.resume(session, ENTRY_OPEN, &ch.seal(&req.encode())).unwrap();
        assert_eq!(id, f.record.id.0);
        ch
    }

    fn run_verify(f: &mut Fixture, session: u64, dw: &[u8], opt_in: bool) -> (bool, VerifyOutcome) {
        let mut ch = establish(f, session, dw);
        let mut params = vec![opt_in as u8];
        params.extend_from_slice(&f.record.encode());
        let out = f.enclave.resume(session, ENTRY_VERIFY, &params).unwrap();
        let out = VerifyOutcome::decode(&out).unwrap();
        let res = VerifyResponse::decode(&ch.open(&out.sealed).unwrap()).unwrap().res;
        (res, out)
    }

    fn contains(hay: &[u8], needle: &[u8]) -> bool {
        hay.windows(needle.len()).any(|w| w == needle)
    }

    #[test]
    fn verifies_in_both_tee_modes() {
        for mode in [Mode::Tee, Mode::TeeDirect] {
            let mut f = fixture(mode, false, "owner");
            let dw = f.dw.clone();
            let (res, out) = run_verify(&mut f, 1, &dw, false);
            assert!(res);
            assert_eq!(out.res_clear, None);
            let other = f.unrelated.clone();
            let (res, out) = run_verify(&mut f, 2, &other, true);
            assert!(!res);
            assert_eq!(out.res_clear, Some(false));
            assert_eq!(f.enclave.live_sessions(), 0);
        }
    }

    #[test]
    fn same_measurement_fresh_keys() {
        let mut f = fixture(Mode::Tee, false, "o");
        let a = AttestationReport::decode(&f.enclave.resume(1, ENTRY_INIT, &[0; 32]).unwrap()).unwrap();
        let b = AttestationReport::decode(&f.enclave.resume(2, ENTRY_INIT, &[0; 32]).unwrap()).unwrap();
        assert_eq!(a.measurement, b.measurement);
        assert_ne!(a.epk, b.epk);
    }

    #[test]
    fn unregistered_entry_aborts_and_erases() {
        let mut f = fixture(Mode::Tee, false, "o");
        f.enclave.resume(1, ENTRY_INIT, &[0; 32]).unwrap();
        assert_eq!(f.enclave.resume(1, "dump_secrets", &[]), Err(AbortCode::Unsupported));
        assert_eq!(f.enclave.live_sessions(), 0);
    }

    #[test]
    fn bad_finish_mac_aborts() {
        let mut f = fixture(Mode::Tee, false, "o");
        let hs = HolderHandshake::new();
        let report = AttestationReport::decode(&f.enclave.resume(1, ENTRY_INIT, &hs.nonce()).unwrap()).unwrap();
        let est = hs.complete(&report, &f.maker, &report.measurement).unwrap();
        let mut fin = est.client_epk.to_vec();
        fin.extend_from_slice(&[0; 16]);
        assert_eq!(f.enclave.resume(1, ENTRY_FINISH, &fin), Err(AbortCode::Attestation));
    }

    #[test]
    fn stale_counter_is_replay() {
        let mut f = fixture(Mode::Tee, false, "o");
        let hs = HolderHandshake::new();
        let report = AttestationReport::decode(&f.enclave.resume(1, ENTRY_INIT, &hs.nonce()).unwrap()).unwrap();
        let est = hs.complete(&report, &f.maker, &report.measurement).unwrap();
        let mut fin = est.client_epk.to_vec();
        fin.extend_from_slice(&est.mac);
        f.enclave.resume(1, ENTRY_FINISH, &fin).unwrap();
        let mut ch = est.channel;
        let req = VerifyRequest {
            id: f.record.id,
            dw: f.dw.clone(),
            tkh: f.tkh.clone(),
        };
        let first = ch.seal(&req.encode());
        let second = ch.seal(&req.encode());
        f.enclave.resume(1, ENTRY_OPEN, &second).unwrap();
        assert_eq!(f.enclave.resume(1, ENTRY_OPEN, &first), Err(AbortCode::Replay));
        assert_eq!(f.enclave.live_sessions(), 0);
    }

    #[test]
    fn garbage_request_aborts() {
        let mut f = fixture(Mode::Tee, false, "o");
        let hs = HolderHandshake::new();
        let report = AttestationReport::decode(&f.enclave.resume(1, ENTRY_INIT, &hs.nonce()).unwrap()).unwrap();
        let est = hs.complete(&report, &f.maker, &report.measurement).unwrap();
        let mut fin = est.client_epk.to_vec();
        fin.extend_from_slice(&est.mac);
        f.enclave.resume(1, ENTRY_FINISH, &fin).unwrap();
        let mut ch = est.channel;
        assert_eq!(f.enclave.resume(1, ENTRY_OPEN, &ch.seal(b"junk")), Err(AbortCode::BadFrame));
        assert_eq!(f.enclave.resume(1, ENTRY_OPEN, &ch.seal(b"junk")), Err(AbortCode::BadFrame));
    }

    #[test]
    fn idgen_mismatch_detected_when_enabled() {
        let mut f = fixture(Mode::Tee, true, "owner");
        // Same record, but the binding names the asset bytes, so a different
        // asset under the same id is inconsistent.
        establish(&mut f, 1, b"tampered\n");
        let mut params = vec![0];
        params.extend_from_slice(&f.record.encode());
        assert_eq!(f.enclave.resume(1, ENTRY_VERIFY, &params), Err(AbortCode::IdgenMismatch));
        assert_eq!(f.enclave.live_sessions(), 0);

        let mut g = fixture(Mode::Tee, false, "owner");
        establish(&mut g, 1, b"tampered\n");
        let mut params = vec![0];
        params.extend_from_slice(&g.record.encode());
        assert!(g.enclave.resume(1, ENTRY_VERIFY, &params).is_ok());
    }

    #[test]
    fn wrong_holder_token_fails_decryption() {
        let mut f = fixture(Mode::Tee, false, "o");
        f.tkh[0] ^= 0x80;
        let dw = f.dw.clone();
        establish(&mut f, 1, &dw);
        let mut params = vec![0];
        params.extend_from_slice(&f.record.encode());
        assert_eq!(f.enclave.resume(1, ENTRY_VERIFY, &params), Err(AbortCode::DecryptFailed));
    }

    #[test]
    fn mode_mismatch_is_unsupported() {
        let mut f = fixture(Mode::TeeDirect, false, "o");
        let mut config = EnclaveConfig::new(Mode::Tee);
        config.idgen_check = false;
        f.enclave = Enclave::new(EnclaveProgram::new(config), SigningKeypair::generate());
        f.maker = f.enclave.manufacturer.verifying_key();
        let dw = f.dw.clone();
        establish(&mut f, 1, &dw);
        let mut params = vec![0];
        params.extend_from_slice(&f.record.encode());
        assert_eq!(f.enclave.resume(1, ENTRY_VERIFY, &params), Err(AbortCode::Unsupported));
    }

    #[test]
    fn erase_leaves_no_residue() {
        let mut f = fixture(Mode::TeeDirect, false, "o");
        let dw = f.dw.clone();
        establish(&mut f, 1, &dw);
        let during = f.enclave.state_dump();
        let probe = &f.dw[..64];
        assert!(contains(&during, probe));
        assert!(contains(&during, &f.tkh[..32]));
        let mut params = vec![0];
        params.extend_from_slice(&f.record.encode());
        f.enclave.resume(1, ENTRY_VERIFY, &params).unwrap();
        let after = f.enclave.state_dump();
        assert!(!contains(&after, probe));
        assert!(!contains(&after, &f.tkh[..32]));
        assert!(!contains(&after, &f.secret_json[..32]));
        // Idempotent.
        f.enclave.resume(1, ENTRY_ERASE, &[]).unwrap();
        f.enclave.resume(1, ENTRY_ERASE, &[]).unwrap();
        assert!(f.enclave.state_dump().is_empty());
    }

    #[test]
    fn abort_path_clears_state() {
        let mut f = fixture(Mode::Tee, false, "o");
        let dw = f.dw.clone();
        establish(&mut f, 1, &dw);
        assert!(!f.enclave.state_dump().is_empty());
        let mut params = vec![0];
        let mut bad = f.record.clone();
        bad.id = AssetId([0; 32]);
        params.extend_from_slice(&bad.encode());
        assert!(f.enclave.resume(1, ENTRY_VERIFY, &params).is_err());
        assert!(f.enclave.state_dump().is_empty());
    }

    #[test]
    fn session_keys_unique() {
        let mut f = fixture(Mode::Tee, false, "o");
        let mut seen = std::collections::HashSet::new();
        for session in 0..1_000u64 {
            let hs = HolderHandshake::new();
            let report =
                AttestationReport::decode(&f.enclave.resume(session, ENTRY_INIT, &hs.nonce()).unwrap()).unwrap();
            let est = hs.complete(&report, &f.maker, &report.measurement).unwrap();
            assert!(seen.insert(*est.channel.key_bytes()));
            f.enclave.erase(session);
        }
    }

    #[test]
    fn outcome_encoding() {
        let o = VerifyOutcome {
            res_clear: Some(true),
            reconstruct_ns: 1,
            detect_ns: 2,
            terminate_ns: 3,
            sealed: vec![9, 9],
        };
        assert_eq!(VerifyOutcome::decode(&o.encode()), Some(o));
        assert_eq!(VerifyOutcome::decode(&[7]), None);
    }
}
