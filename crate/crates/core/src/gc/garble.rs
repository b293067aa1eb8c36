//! Half-gates garbling with free XOR.
//!
//! Every wire `w` has a zero label `W0`; its one label is `W0 ^ delta`, where
//! `delta` has its low bit set so the two labels always disagree on the
//! permute bit. XOR and INV gates are computed locally. Each AND gate costs
//! two ciphertexts: a garbler half-gate and an evaluator half-gate.
//!
//! Gate hashing is `H(x, i) = AES_k(sigma(x) ^ i) ^ sigma(x) ^ i` with a fixed
//! public AES key, `sigma(hi || lo) = (hi ^ lo) || hi`, and the tweak `i` set to
//! `2g` and `2g + 1` for AND gate `g`.

use std::sync::OnceLock;

use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use zeroize::Zeroize;

use super::circuit::{BooleanCircuit, GateKind};
use super::GcError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WireLabel(pub u128);

impl WireLabel {
    pub fn permute_bit(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn to_bytes(self) -> [u8; 16] {
        self.0.to_le_bytes()
    }

    pub fn from_bytes(b: [u8; 16]) -> Self {
        Self(u128::from_le_bytes(b))
    }

    fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut b);
        Self::from_bytes(b)
    }
}

fn fixed_cipher() -> &'static Aes128 {
    static CIPHER: OnceLock<Aes128> = OnceLock::new();
    CIPHER.get_or_init(|| {
        let key = Sha256::digest(b"puppy/gc/fixed-key");
        Aes128::new_from_slice(&key[..16]).expect("16-byte key")
    })
}

fn sigma(x: u128) -> u128 {
    let hi = x >> 64;
    let lo = x & (u64::MAX as u128);
    ((hi ^ lo) << 64) | hi
}

fn hash(x: u128, tweak: u64) -> u128 {
    let s = sigma(x) ^ tweak as u128;
    let mut block = s.to_le_bytes().into();
    fixed_cipher().encrypt_block(&mut block);
    u128::from_le_bytes(block.into()) ^ s
}

/// `F`: two ciphertexts per AND gate, in gate order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GarbledCircuit {
    pub tables: Vec<[u128; 2]>,
}

impl GarbledCircuit {
    pub fn ciphertext_count(&self) -> usize {
        self.tables.len() * 2
    }

    pub fn to_wire(&self) -> Vec<[[u8; 16]; 2]> {
        self.tables.iter().map(|[a, b]| [a.to_le_bytes(), b.to_le_bytes()]).collect()
    }

    pub fn from_wire(tables: &[[[u8; 16]; 2]]) -> Self {
        Self {
            tables: tables
                .iter()
                .map(|[a, b]| [u128::from_le_bytes(*a), u128::from_le_bytes(*b)])
                .collect(),
        }
    }
}

/// `e`: the zero label of every input wire and the global offset.
pub struct EncodingInfo {
    zero_labels: Vec<u128>,
    delta: u128,
    garbler_inputs: usize,
}

impl Drop for EncodingInfo {
    fn drop(&mut self) {
        self.zero_labels.zeroize();
        self.delta.zeroize();
    }
}

impl EncodingInfo {
    pub fn num_inputs(&self) -> usize {
        self.zero_labels.len()
    }

    /// Labels for bit 0 and bit 1 of input wire `i`.
    pub fn label_pair(&self, i: usize) -> (WireLabel, WireLabel) {
        let z = self.zero_labels[i];
        (WireLabel(z), WireLabel(z ^ self.delta))
    }

    fn label(&self, i: usize, bit: bool) -> WireLabel {
        let (l0, l1) = self.label_pair(i);
        if bit {
            l1
        } else {
            l0
        }
    }

    /// Labels for the garbler's own input bits.
    pub fn encode_garbler(&self, bits: &[bool]) -> Result<Vec<WireLabel>, GcError> {
        if bits.len() != self.garbler_inputs {
            return Err(GcError::Width {
                expected: self.garbler_inputs,
                got: bits.len(),
            });
        }
        Ok(bits.iter().enumerate().map(|(i, &b)| self.label(i, b)).collect())
    }

    /// Label pairs for the evaluator's inputs, which it fetches by OT.
    pub fn evaluator_pairs(&self) -> Vec<(WireLabel, WireLabel)> {
        (self.garbler_inputs..self.num_inputs()).map(|i| self.label_pair(i)).collect()
    }
}

/// `d`: the permute bit of each output wire's zero label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodingInfo {
    pub bits: Vec<bool>,
}

pub fn garble<R: RngCore + CryptoRng>(
    circuit: &BooleanCircuit,
    rng: &mut R,
) -> Result<(GarbledCircuit, EncodingInfo, DecodingInfo), GcError> {
    circuit.validate()?;
    let delta = WireLabel::random(rng).0 | 1;
    let inputs = circuit.num_inputs();
    let mut w0: Vec<u128> = Vec::with_capacity(circuit.num_wires());
    for _ in 0..inputs {
        w0.push(WireLabel::random(rng).0);
    }
    let mut tables = Vec::with_capacity(circuit.and_count());
    for gate in &circuit.gates {
        let a0 = w0[gate.a as usize];
        let b0 = w0[gate.b as usize];
        let out = match gate.kind {
            GateKind::Xor => a0 ^ b0,
            GateKind::Inv => a0 ^ delta,
            GateKind::And => {
                let j = tables.len() as u64;
                let (t0, t1) = (2 * j, 2 * j + 1);
                let (a1, b1) = (a0 ^ delta, b0 ^ delta);
                let pa = a0 & 1 == 1;
                let pb = b0 & 1 == 1;
                let (ha0, ha1) = (hash(a0, t0), hash(a1, t0));
                let (hb0, hb1) = (hash(b0, t1), hash(b1, t1));
                let tg = ha0 ^ ha1 ^ if pb { delta } else { 0 };
                let wg = ha0 ^ if pa { tg } else { 0 };
                let te = hb0 ^ hb1 ^ a0;
                let we = hb0 ^ if pb { te ^ a0 } else { 0 };
                tables.push([tg, te]);
                wg ^ we
            }
        };
        w0.push(out);
    }
    let decode = DecodingInfo {
        bits: circuit.outputs.iter().map(|&o| w0[o as usize] & 1 == 1).collect(),
    };
    w0.truncate(inputs);
    let encoding = EncodingInfo {
        zero_labels: w0,
        delta,
        garbler_inputs: circuit.garbler_inputs as usize,
    };
    Ok((GarbledCircuit { tables }, encoding, decode))
}

/// `X = Encode(e, x)` for the full input.
pub fn encode(e: &EncodingInfo, x: &[bool]) -> Result<Vec<WireLabel>, GcError> {
    if x.len() != e.num_inputs() {
        return Err(GcError::Width {
            expected: e.num_inputs(),
            got: x.len(),
        });
    }
    Ok(x.iter().enumerate().map(|(i, &b)| e.label(i, b)).collect())
}

/// `Y = Eval(F, X)`.
pub fn eval(circuit: &BooleanCircuit, f: &GarbledCircuit, x: &[WireLabel]) -> Result<Vec<WireLabel>, GcError> {
    circuit.validate()?;
    if x.len() != circuit.num_inputs() {
        return Err(GcError::Width {
            expected: circuit.num_inputs(),
            got: x.len(),
        });
    }
    if f.tables.len() != circuit.and_count() {
        return Err(GcError::Malformed(format!(
            "{} garbled tables for {} AND gates",
            f.tables.len(),
            circuit.and_count()
        )));
    }
    let mut w: Vec<u128> = Vec::with_capacity(circuit.num_wires());
    w.extend(x.iter().map(|l| l.0));
    let mut j = 0u64;
    for gate in &circuit.gates {
        let a = w[gate.a as usize];
        let b = w[gate.b as usize];
        let out = match gate.kind {
            GateKind::Xor => a ^ b,
            GateKind::Inv => a,
            GateKind::And => {
                let [tg, te] = f.tables[j as usize];
                let wg = hash(a, 2 * j) ^ if a & 1 == 1 { tg } else { 0 };
                let we = hash(b, 2 * j + 1) ^ if b & 1 == 1 { te ^ a } else { 0 };
                j += 1;
                wg ^ we
            }
        };
        w.push(out);
    }
    Ok(circuit.outputs.iter().map(|&o| WireLabel(w[o as usize])).collect())
}

/// `y = Decode(d, Y)`.
pub fn decode(d: &DecodingInfo, y: &[WireLabel]) -> Result<Vec<bool>, GcError> {
    if y.len() != d.bits.len() {
        return Err(GcError::Width {
            expected: d.bits.len(),
            got: y.len(),
        });
    }
    Ok(y.iter().zip(&d.bits).map(|(l, &p)| l.permute_bit() ^ p).collect())
}
