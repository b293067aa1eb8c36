//! Counter-based AES-256-GCM channel bound to an attested session.
//!
//! A sealed message is `seq u64 || ciphertext || tag`. The nonce is a 4-byte
//! direction label followed by `seq`, and each side only accepts sequence
//! numbers strictly greater than the last one it opened.

use zeroize::Zeroizing;

use crate::crypto::{self, AuthCiphertext, SymmetricKey, NONCE_LEN, TAG_LEN};

pub const HOLDER_TO_ENCLAVE: [u8; 4] = *b"h2e\0";
pub const ENCLAVE_TO_HOLDER: [u8; 4] = *b"e2h\0";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ChannelError {
    #[error("sealed message too short")]
    Malformed,
    #[error("stale or replayed sequence number {0}")]
    Replay(u64),
    #[error("message authentication failed")]
    Authentication,
}

pub struct SecureChannel {
    key: SymmetricKey,
    send_label: [u8; 4],
    recv_label: [u8; 4],
    send_seq: u64,
    recv_seq: u64,
}

impl std::fmt::Debug for SecureChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecureChannel")
            .field("send_seq", &self.send_seq)
            .field("recv_seq", &self.recv_seq)
            .finish_non_exhaustive()
    }
}

fn nonce(label: [u8; 4], seq: u64) -> [u8; NONCE_LEN] {
    let mut n = [0u8; NONCE_LEN];
    n[..4].copy_from_slice(&label);
    n[4..].copy_from_slice(&seq.to_be_bytes());
    n
}

impl SecureChannel {
    pub fn holder(key: SymmetricKey) -> Self {
        Self::new(key, HOLDER_TO_ENCLAVE, ENCLAVE_TO_HOLDER)
    }

    pub fn enclave(key: SymmetricKey) -> Self {
        Self::new(key, ENCLAVE_TO_HOLDER, HOLDER_TO_ENCLAVE)
    }

    fn new(key: SymmetricKey, send_label: [u8; 4], recv_label: [u8; 4]) -> Self {
        Self {
            key,
            send_label,
            recv_label,
            send_seq: 0,
            recv_seq: 0,
        }
    }

    pub fn key_bytes(&self) -> &[u8; 32] {
        self.key.as_bytes()
    }

    pub fn seal(&mut self, plaintext: &[u8]) -> Vec<u8> {
        self.send_seq += 1;
        let seq = self.send_seq;
        let ct = crypto::encrypt_with_nonce(&self.key, &nonce(self.send_label, seq), plaintext);
        let mut out = Vec::with_capacity(8 + ct.body.len() + TAG_LEN);
        out.extend_from_slice(&seq.to_be_bytes());
        out.extend_from_slice(&ct.body);
        out.extend_from_slice(&ct.tag);
        out
    }

    pub fn open(&mut self, sealed: &[u8]) -> Result<Zeroizing<Vec<u8>>, ChannelError> {
        if sealed.len() < 8 + TAG_LEN {
            return Err(ChannelError::Malformed);
        }
        let seq = u64::from_be_bytes(sealed[..8].try_into().unwrap());
        if seq <= self.recv_seq {
            return Err(ChannelError::Replay(seq));
        }
        let body = &sealed[8..sealed.len() - TAG_LEN];
        let ct = AuthCiphertext {
            nonce: nonce(self.recv_label, seq),
            body: body.to_vec(),
            tag: sealed[sealed.len() - TAG_LEN..].try_into().unwrap(),
        };
        let plain = crypto::decrypt(&self.key, &ct).map_err(|_| ChannelError::Authentication)?;
        self.recv_seq = seq;
        Ok(Zeroizing::new(plain))
    }
}
