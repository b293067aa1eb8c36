//! 1-out-of-2 oblivious transfer of 128-bit labels, in the "simplest OT" style
//! over the Ristretto group.
//!
//! The sender publishes `A = aG`. For OT `i` with choice `b` the receiver
//! picks `r` and sends `B = rG` (b = 0) or `B = A + rG` (b = 1). The sender
//! derives `k0 = H(i, A, B, aB)` and `k1 = H(i, A, B, a(B - A))`; the receiver
//! can only compute `k_b = H(i, A, B, rA)`. Each message is the label masked
//! with a key-derived pad, followed by a 16-byte tag over the masked bytes, so
//! a tampered payload is detected instead of decoding to a wrong label.

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_TABLE;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::traits::Identity;
use curve25519_dalek::Scalar;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;
use zeroize::Zeroize;

use super::garble::WireLabel;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum OtError {
    #[error("invalid group element")]
    BadPoint,
    #[error("expected {expected} OT messages, got {got}")]
    Count { expected: usize, got: usize },
    #[error("OT payload {0} failed authentication")]
    BadTag(usize),
}

fn decompress(bytes: &[u8; 32]) -> Result<RistrettoPoint, OtError> {
    let p = CompressedRistretto(*bytes).decompress().ok_or(OtError::BadPoint)?;
    if p == RistrettoPoint::identity() {
        return Err(OtError::BadPoint);
    }
    Ok(p)
}

fn random_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Scalar {
    let mut wide = [0u8; 64];
    rng.fill_bytes(&mut wide);
    let s = Scalar::from_bytes_mod_order_wide(&wide);
    wide.zeroize();
    s
}

fn derive_key(index: u64, a: &[u8; 32], b: &[u8; 32], shared: &RistrettoPoint) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"puppy/ot/v1");
    h.update(index.to_be_bytes());
    h.update(a);
    h.update(b);
    h.update(shared.compress().as_bytes());
    h.finalize().into()
}

fn pad(key: &[u8; 32], label: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(key);
    h.update(label);
    h.finalize().into()
}

fn tag(key: &[u8; 32], masked: &[u8]) -> [u8; 32] {
    let mut input = b"mac".to_vec();
    input.extend_from_slice(masked);
    pad(key, &input)
}

fn seal(key: &[u8; 32], msg: WireLabel) -> [u8; 32] {
    let enc = pad(key, b"enc");
    let mut out = [0u8; 32];
    for (o, (m, p)) in out[..16].iter_mut().zip(msg.to_bytes().iter().zip(&enc[..16])) {
        *o = m ^ p;
    }
    let mac = tag(key, &out[..16]);
    out[16..].copy_from_slice(&mac[..16]);
    out
}

fn unseal(key: &[u8; 32], ct: &[u8; 32]) -> Option<WireLabel> {
    let mac = tag(key, &ct[..16]);
    if !bool::from(ct[16..].ct_eq(&mac[..16])) {
        return None;
    }
    let enc = pad(key, b"enc");
    let mut label = [0u8; 16];
    for (l, (c, p)) in label.iter_mut().zip(ct[..16].iter().zip(&enc[..16])) {
        *l = c ^ p;
    }
    Some(WireLabel::from_bytes(label))
}

pub struct OtSender {
    a: Scalar,
    big_a: RistrettoPoint,
}

impl Drop for OtSender {
    fn drop(&mut self) {
        self.a.zeroize();
    }
}

impl OtSender {
    pub fn new<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let a = random_scalar(rng);
        let big_a = &a * RISTRETTO_BASEPOINT_TABLE;
        Self { a, big_a }
    }

    pub fn init_message(&self) -> [u8; 32] {
        self.big_a.compress().to_bytes()
    }

    /// Answers the receiver's points with one sealed pair per OT.
    pub fn respond(
        &self,
        points: &[[u8; 32]],
        messages: &[(WireLabel, WireLabel)],
    ) -> Result<Vec<([u8; 32], [u8; 32])>, OtError> {
        if points.len() != messages.len() {
            return Err(OtError::Count {
                expected: messages.len(),
                got: points.len(),
            });
        }
        let a_bytes = self.init_message();
        points
            .iter()
            .zip(messages)
            .enumerate()
            .map(|(i, (b_bytes, &(m0, m1)))| {
                let b = decompress(b_bytes)?;
                let k0 = derive_key(i as u64, &a_bytes, b_bytes, &(self.a * b));
                let k1 = derive_key(i as u64, &a_bytes, b_bytes, &(self.a * (b - self.big_a)));
                Ok((seal(&k0, m0), seal(&k1, m1)))
            })
            .collect()
    }
}

pub struct OtReceiver {
    a_bytes: [u8; 32],
    big_a: RistrettoPoint,
    choices: Vec<bool>,
    scalars: Vec<Scalar>,
    points: Vec<[u8; 32]>,
}

impl Drop for OtReceiver {
    fn drop(&mut self) {
        self.scalars.zeroize();
        self.choices.zeroize();
    }
}

/// The receiver's point for choice `b` under randomness `r`.
fn choice_point(big_a: &RistrettoPoint, b: bool, r: &Scalar) -> RistrettoPoint {
    let rg = r * RISTRETTO_BASEPOINT_TABLE;
    if b {
        big_a + rg
    } else {
        rg
    }
}

impl OtReceiver {
    /// Returns the receiver state and the points to send.
    pub fn new<R: RngCore + CryptoRng>(
        a_bytes: &[u8; 32],
        choices: &[bool],
        rng: &mut R,
    ) -> Result<(Self, Vec<[u8; 32]>), OtError> {
        let scalars: Vec<Scalar> = choices.iter().map(|_| random_scalar(rng)).collect();
        Self::with_scalars(a_bytes, choices, scalars)
    }

    fn with_scalars(a_bytes: &[u8; 32], choices: &[bool], scalars: Vec<Scalar>) -> Result<(Self, Vec<[u8; 32]>), OtError> {
        let big_a = decompress(a_bytes)?;
        let points: Vec<[u8; 32]> = choices
            .iter()
            .zip(&scalars)
            .map(|(&b, r)| choice_point(&big_a, b, r).compress().to_bytes())
            .collect();
        let state = Self {
            a_bytes: *a_bytes,
            big_a,
            choices: choices.to_vec(),
            scalars,
            points: points.clone(),
        };
        Ok((state, points))
    }

    pub fn finish(self, payload: &[([u8; 32], [u8; 32])]) -> Result<Vec<WireLabel>, OtError> {
        if payload.len() != self.choices.len() {
            return Err(OtError::Count {
                expected: self.choices.len(),
                got: payload.len(),
            });
        }
        payload
            .iter()
            .enumerate()
            .map(|(i, (c0, c1))| {
                let key = derive_key(i as u64, &self.a_bytes, &self.points[i], &(self.scalars[i] * self.big_a));
                let ct = if self.choices[i] { c1 } else { c0 };
                unseal(&key, ct).ok_or(OtError::BadTag(i))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<(WireLabel, WireLabel)> {
        (0..n).map(|_| (WireLabel(rng.gen()), WireLabel(rng.gen()))).collect()
    }

    #[test]
    fn single_transfers() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for b in [false, true] {
            let msgs = labels(&mut rng, 1);
            let sender = OtSender::new(&mut rng);
            let (recv, pts) = OtReceiver::new(&sender.init_message(), &[b], &mut rng).unwrap();
            let payload = sender.respond(&pts, &msgs).unwrap();
            let got = recv.finish(&payload).unwrap();
            assert_eq!(got[0], if b { msgs[0].1 } else { msgs[0].0 });
        }
    }

    #[test]
    fn parallel_128() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let msgs = labels(&mut rng, 128);
        let choices: Vec<bool> = (0..128).map(|_| rng.gen()).collect();
        let sender = OtSender::new(&mut rng);
        let (recv, pts) = OtReceiver::new(&sender.init_message(), &choices, &mut rng).unwrap();
        let got = recv.finish(&sender.respond(&pts, &msgs).unwrap()).unwrap();
        for ((g, &(m0, m1)), &b) in got.iter().zip(&msgs).zip(&choices) {
            assert_eq!(*g, if b { m1 } else { m0 });
        }
    }

    #[test]
    fn unused_label_not_on_wire() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let msgs = labels(&mut rng, 16);
        let sender = OtSender::new(&mut rng);
        let (_, pts) = OtReceiver::new(&sender.init_message(), &[false; 16], &mut rng).unwrap();
        let payload = sender.respond(&pts, &msgs).unwrap();
        let mut transcript = sender.init_message().to_vec();
        pts.iter().for_each(|p| transcript.extend_from_slice(p));
        payload.iter().for_each(|(a, b)| {
            transcript.extend_from_slice(a);
            transcript.extend_from_slice(b);
        });
        for (m0, m1) in msgs {
            for m in [m0, m1] {
                assert!(!transcript.windows(16).any(|w| w == m.to_bytes()));
            }
        }
    }

    #[test]
    fn choice_hidden_from_sender() {
        // Choice 1 under randomness r sends exactly what choice 0 sends under
        // r + a, so the sender's view is the same distribution for both bits.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sender = OtSender::new(&mut rng);
        let r = random_scalar(&mut rng);
        let (_, p1) = OtReceiver::with_scalars(&sender.init_message(), &[true], vec![r]).unwrap();
        let (_, p0) = OtReceiver::with_scalars(&sender.init_message(), &[false], vec![r + sender.a]).unwrap();
        assert_eq!(p0, p1);
    }

    #[test]
    fn tampering_aborts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let msgs = labels(&mut rng, 4);
        let sender = OtSender::new(&mut rng);
        let (recv, pts) = OtReceiver::new(&sender.init_message(), &[true, false, true, false], &mut rng).unwrap();
        let mut payload = sender.respond(&pts, &msgs).unwrap();
        payload[2].1[3] ^= 1;
        assert_eq!(recv.finish(&payload), Err(OtError::BadTag(2)));
    }

    #[test]
    fn malformed_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(OtReceiver::new(&[0xFF; 32], &[true], &mut rng).is_err());
        assert!(OtReceiver::new(&[0; 32], &[true], &mut rng).is_err());
        let sender = OtSender::new(&mut rng);
        let msgs = labels(&mut rng, 1);
        assert_eq!(sender.respond(&[[0xFF; 32]], &msgs), Err(OtError::BadPoint));
        assert!(matches!(sender.respond(&[], &msgs), Err(OtError::Count { .. })));
    }
}
