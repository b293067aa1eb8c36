//! Symmetric encryption, 2-out-of-2 XOR secret sharing, asset identifiers and
//! signatures.
//!
//! Every other module builds on these. Keys are 256-bit, the cipher is
//! AES-256-GCM with a random 96-bit nonce, hashes are SHA-256 and signatures
//! are Ed25519.

use std::fmt;

use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce};
use ed25519_dalek::{Signer, Verifier};
use hmac::{Hmac, Mac};
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zeroize::{Zeroize, ZeroizeOnDrop};

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("authentication failed: ciphertext tampered or wrong key")]
    Authentication,
    #[error("cannot share an empty secret")]
    EmptySecret,
    #[error("share length mismatch: {0} vs {1}")]
    ShareLength(usize, usize),
    #[error("malformed ciphertext: {0} bytes is shorter than nonce and tag")]
    MalformedCiphertext(usize),
    #[error("invalid key material")]
    InvalidKey,
}

/// Appends `field` to `buf` prefixed with its 8-byte big-endian length.
///
/// Used wherever several variable-length fields are hashed together so that
/// no two distinct field lists share a concatenation.
pub fn frame_into(buf: &mut Vec<u8>, field: &[u8]) {
    buf.extend_from_slice(&(field.len() as u64).to_be_bytes());
    buf.extend_from_slice(field);
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// Reduces a big-endian byte string modulo `m`.
pub fn be_bytes_mod(bytes: &[u8], m: u64) -> u64 {
    assert!(m > 0, "modulus must be positive");
    let m = m as u128;
    bytes
        .iter()
        .fold(0u128, |acc, &b| ((acc << 8) | b as u128) % m) as u64
}

#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct SymmetricKey([u8; KEY_LEN]);

impl SymmetricKey {
    /// Fresh key from the operating system RNG.
    pub fn generate() -> Self {
        let mut bytes = [0u8; KEY_LEN];
        OsRng.fill_bytes(&mut bytes);
        Self(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; KEY_LEN] = bytes.try_into().map_err(|_| CryptoError::InvalidKey)?;
        Ok(Self(arr))
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

/// `k <- Gen(1^λ)`.
pub fn gen_key() -> SymmetricKey {
    SymmetricKey::generate()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthCiphertext {
    pub nonce: [u8; NONCE_LEN],
    /// Ciphertext body without the tag.
    pub body: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl AuthCiphertext {
    /// `nonce || body || tag`, the layout used in registration records.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(NONCE_LEN + self.body.len() + TAG_LEN);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.body);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < NONCE_LEN + TAG_LEN {
            return Err(CryptoError::MalformedCiphertext(bytes.len()));
        }
        let (nonce, rest) = bytes.split_at(NONCE_LEN);
        let (body, tag) = rest.split_at(rest.len() - TAG_LEN);
        Ok(Self {
            nonce: nonce.try_into().unwrap(),
            body: body.to_vec(),
            tag: tag.try_into().unwrap(),
        })
    }
}

pub fn encrypt(key: &SymmetricKey, plaintext: &[u8]) -> AuthCiphertext {
    let mut nonce = [0u8; NONCE_LEN];
    OsRng.fill_bytes(&mut nonce);
    encrypt_with_nonce(key, &nonce, plaintext)
}

pub(crate) fn encrypt_with_nonce(
    key: &SymmetricKey,
    nonce: &[u8; NONCE_LEN],
    plaintext: &[u8],
) -> AuthCiphertext {
    let cipher = Aes256Gcm::new(key.as_bytes().into());
    let mut sealed = cipher
        .encrypt(Nonce::from_slice(nonce), plaintext)
        .expect("AES-GCM encryption cannot fail for in-memory buffers");
    let tag: [u8; TAG_LEN] = sealed[sealed.len() - TAG_LEN..].try_into().unwrap();
    sealed.truncate(sealed.len() - TAG_LEN);
    AuthCiphertext {
        nonce: *nonce,
        body: sealed,
        tag,
    }
}

pub fn decrypt(key: &SymmetricKey, ct: &AuthCiphertext) -> Result<Vec<u8>, CryptoError> {
    let cipher = Aes256Gcm::new(key.as_bytes().into());
    let mut sealed = Vec::with_capacity(ct.body.len() + TAG_LEN);
    sealed.extend_from_slice(&ct.body);
    sealed.extend_from_slice(&ct.tag);
    cipher
        .decrypt(Nonce::from_slice(&ct.nonce), sealed.as_slice())
        .map_err(|_| CryptoError::Authentication)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShareRole {
    Holder,
    Prover,
}

#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct KeyShare {
    bytes: Vec<u8>,
    #[zeroize(skip)]
    role: ShareRole,
}

impl KeyShare {
    pub fn new(role: ShareRole, bytes: Vec<u8>) -> Self {
        Self { bytes, role }
    }

    pub fn role(&self) -> ShareRole {
        self.role
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

impl fmt::Debug for KeyShare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyShare({:?}, {} bytes)", self.role, self.bytes.len())
    }
}

/// Splits `secret` into a uniformly random holder share and
/// `prover = secret XOR holder`.
pub fn share(secret: &[u8]) -> Result<(KeyShare, KeyShare), CryptoError> {
    let mut holder = vec![0u8; secret.len()];
    OsRng.fill_bytes(&mut holder);
    share_with_mask(secret, holder)
}

/// Sharing with a caller-chosen holder share. Exposed for tests and for
/// callers that draw the mask from their own RNG.
pub fn share_with_mask(
    secret: &[u8],
    holder_mask: Vec<u8>,
) -> Result<(KeyShare, KeyShare), CryptoError> {
    if secret.is_empty() {
        return Err(CryptoError::EmptySecret);
    }
    if holder_mask.len() != secret.len() {
        return Err(CryptoError::ShareLength(holder_mask.len(), secret.len()));
    }
    let prover = secret
        .iter()
        .zip(&holder_mask)
        .map(|(s, h)| s ^ h)
        .collect();
    Ok((
        KeyShare::new(ShareRole::Holder, holder_mask),
        KeyShare::new(ShareRole::Prover, prover),
    ))
}

pub fn reconstruct(a: &KeyShare, b: &KeyShare) -> Result<zeroize::Zeroizing<Vec<u8>>, CryptoError> {
    xor_bytes(a.as_bytes(), b.as_bytes())
}

pub fn xor_bytes(a: &[u8], b: &[u8]) -> Result<zeroize::Zeroizing<Vec<u8>>, CryptoError> {
    if a.len() != b.len() {
        return Err(CryptoError::ShareLength(a.len(), b.len()));
    }
    Ok(zeroize::Zeroizing::new(
        a.iter().zip(b).map(|(x, y)| x ^ y).collect(),
    ))
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AssetId(#[serde(with = "hex_array")] pub [u8; 32]);

impl AssetId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s.trim(), &mut out)?;
        Ok(Self(out))
    }

    pub fn random() -> Self {
        let mut out = [0u8; 32];
        OsRng.fill_bytes(&mut out);
        Self(out)
    }
}

impl fmt::Debug for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AssetId({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// `H(O || M || date)` with each field length-prefixed.
pub fn idgen(owner_label: &[u8], asset_metadata: &[u8], date: &[u8]) -> AssetId {
    let mut buf = Vec::with_capacity(24 + owner_label.len() + asset_metadata.len() + date.len());
    frame_into(&mut buf, owner_label);
    frame_into(&mut buf, asset_metadata);
    frame_into(&mut buf, date);
    AssetId(sha256(&buf))
}

pub struct SigningKeypair {
    signing: ed25519_dalek::SigningKey,
}

pub type VerifyingKey = ed25519_dalek::VerifyingKey;
pub type Signature = ed25519_dalek::Signature;

impl SigningKeypair {
    pub fn generate() -> Self {
        Self {
            signing: ed25519_dalek::SigningKey::generate(&mut OsRng),
        }
    }

    pub fn from_secret_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| CryptoError::InvalidKey)?;
        Ok(Self {
            signing: ed25519_dalek::SigningKey::from_bytes(&arr),
        })
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.signing.verifying_key()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        self.signing.sign(message)
    }
}

impl fmt::Debug for SigningKeypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigningKeypair(pvk={})", hex::encode(self.verifying_key().as_bytes()))
    }
}

pub fn verifying_key_from_bytes(bytes: &[u8]) -> Result<VerifyingKey, CryptoError> {
    let arr: [u8; 32] = bytes.try_into().map_err(|_| CryptoError::InvalidKey)?;
    VerifyingKey::from_bytes(&arr).map_err(|_| CryptoError::InvalidKey)
}

/// Accepts only a well-formed signature over exactly `message`.
pub fn verify_sig(pvk: &VerifyingKey, signature: &[u8], message: &[u8]) -> bool {
    let Ok(sig) = Signature::from_slice(signature) else {
        return false;
    };
    pvk.verify(message, &sig).is_ok()
}

/// HMAC-SHA-256 of `data` under `key`.
pub fn hmac_sha256(key: &[u8], data: &[u8]) -> [u8; 32] {
    let mut m = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("hmac accepts any key length");
    m.update(data);
    m.finalize().into_bytes().into()
}

/// Constant-time check of an HMAC-SHA-256 tag.
pub fn hmac_sha256_verify(key: &[u8], data: &[u8], tag: &[u8]) -> bool {
    let mut m = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("hmac accepts any key length");
    m.update(data);
    m.verify_slice(tag).is_ok()
}

pub(crate) mod hex_array {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(s.trim(), &mut out).map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}
