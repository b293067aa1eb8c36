//! Attestation reports and the attested key exchange.
//!
//! The enclave signs `measurement || epk || client_nonce` with the
//! manufacturer key. The holder checks the signature and the pinned
//! measurement, then runs X25519 against `epk`. Both sides expand the shared
//! secret with HKDF-SHA-256 (salt = client nonce, info = transcript) into a
//! session key and a finish key; the finish MAC proves to the enclave that the
//! holder derived the same keys.

use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use rand::rngs::OsRng;
use rand::RngCore;
use sha2::Sha256;
use subtle::ConstantTimeEq;
use x25519_dalek::{EphemeralSecret, PublicKey};
use zeroize::Zeroizing;

use super::channel::SecureChannel;
use crate::crypto::{verify_sig, SymmetricKey, VerifyingKey};

const REPORT_CONTEXT: &[u8] = b"puppy/ra/report/v1";
const KDF_INFO: &[u8] = b"puppy/ra/v1";
const FINISH_CONTEXT: &[u8] = b"ra-finish";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AttestError {
    #[error("attestation signature does not verify under the manufacturer key")]
    BadSignature,
    #[error("enclave measurement does not match the pinned program")]
    MeasurementMismatch,
    #[error("key exchange produced a non-contributory secret")]
    WeakKey,
    #[error("finish MAC mismatch")]
    BadFinish,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttestationReport {
    pub measurement: [u8; 32],
    pub epk: [u8; 32],
    pub sig: [u8; 64],
}

impl AttestationReport {
    pub fn encode(&self) -> [u8; 128] {
        let mut out = [0u8; 128];
        out[..32].copy_from_slice(&self.measurement);
        out[32..64].copy_from_slice(&self.epk);
        out[64..].copy_from_slice(&self.sig);
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != 128 {
            return None;
        }
        Some(Self {
            measurement: bytes[..32].try_into().unwrap(),
            epk: bytes[32..64].try_into().unwrap(),
            sig: bytes[64..].try_into().unwrap(),
        })
    }
}

/// Bytes covered by the attestation signature.
pub fn report_message(measurement: &[u8; 32], epk: &[u8; 32], client_nonce: &[u8; 32]) -> Vec<u8> {
    let mut m = Vec::with_capacity(REPORT_CONTEXT.len() + 96);
    m.extend_from_slice(REPORT_CONTEXT);
    m.extend_from_slice(measurement);
    m.extend_from_slice(epk);
    m.extend_from_slice(client_nonce);
    m
}

pub fn verify_report(
    report: &AttestationReport,
    client_nonce: &[u8; 32],
    manufacturer: &VerifyingKey,
    expected_measurement: &[u8; 32],
) -> Result<(), AttestError> {
    let msg = report_message(&report.measurement, &report.epk, client_nonce);
    if !verify_sig(manufacturer, &report.sig, &msg) {
        return Err(AttestError::BadSignature);
    }
    if &report.measurement != expected_measurement {
        return Err(AttestError::MeasurementMismatch);
    }
    Ok(())
}

pub(crate) struct SessionKeys {
    pub session: SymmetricKey,
    pub finish: Zeroizing<[u8; 32]>,
}

pub(crate) fn derive_keys(
    shared: &[u8; 32],
    client_nonce: &[u8; 32],
    measurement: &[u8; 32],
    epk: &[u8; 32],
    client_epk: &[u8; 32],
) -> SessionKeys {
    let hk = Hkdf::<Sha256>::new(Some(client_nonce), shared);
    let mut info = Vec::with_capacity(KDF_INFO.len() + 96);
    info.extend_from_slice(KDF_INFO);
    info.extend_from_slice(measurement);
    info.extend_from_slice(epk);
    info.extend_from_slice(client_epk);
    let mut okm = Zeroizing::new([0u8; 64]);
    hk.expand(&info, okm.as_mut()).expect("64 bytes is a valid HKDF length");
    let session = SymmetricKey::from_bytes(&okm[..32]).expect("32-byte key");
    let mut finish = Zeroizing::new([0u8; 32]);
    finish.copy_from_slice(&okm[32..]);
    SessionKeys { session, finish }
}

pub(crate) fn finish_mac(
    finish_key: &[u8; 32],
    client_nonce: &[u8; 32],
    epk: &[u8; 32],
    client_epk: &[u8; 32],
) -> [u8; 16] {
    let mut mac = Hmac::<Sha256>::new_from_slice(finish_key).expect("any key length");
    mac.update(FINISH_CONTEXT);
    mac.update(client_nonce);
    mac.update(epk);
    mac.update(client_epk);
    mac.finalize().into_bytes()[..16].try_into().unwrap()
}

pub(crate) fn macs_equal(a: &[u8; 16], b: &[u8; 16]) -> bool {
    a.ct_eq(b).into()
}

/// Holder side of the handshake.
pub struct HolderHandshake {
    nonce: [u8; 32],
}

/// Output of a successful handshake: the `RA_FINISH` fields and the channel.
pub struct Established {
    pub client_epk: [u8; 32],
    pub mac: [u8; 16],
    pub channel: SecureChannel,
}

impl Default for HolderHandshake {
    fn default() -> Self {
        Self::new()
    }
}

impl HolderHandshake {
    pub fn new() -> Self {
        let mut nonce = [0u8; 32];
        OsRng.fill_bytes(&mut nonce);
        Self { nonce }
    }

    pub fn nonce(&self) -> [u8; 32] {
        self.nonce
    }

    pub fn complete(
        self,
        report: &AttestationReport,
        manufacturer: &VerifyingKey,
        expected_measurement: &[u8; 32],
    ) -> Result<Established, AttestError> {
        verify_report(report, &self.nonce, manufacturer, expected_measurement)?;
        let secret = EphemeralSecret::random_from_rng(OsRng);
        let client_epk = PublicKey::from(&secret).to_bytes();
        let shared = secret.diffie_hellman(&PublicKey::from(report.epk));
        if !shared.was_contributory() {
            return Err(AttestError::WeakKey);
        }
        let keys = derive_keys(shared.as_bytes(), &self.nonce, &report.measurement, &report.epk, &client_epk);
        let mac = finish_mac(&keys.finish, &self.nonce, &report.epk, &client_epk);
        Ok(Established {
            client_epk,
            mac,
            channel: SecureChannel::holder(keys.session),
        })
    }
}
