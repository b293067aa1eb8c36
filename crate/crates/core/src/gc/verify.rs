//! The reduced FreqyWM check as a boolean circuit.
//!
//! The secret is compiled into a fixed-width record per pair,
//! `tag_i (u32 BE) || tag_j (u32 BE) || s_ij (u16 BE)`, where a tag is the
//! first four bytes of `SHA-256(frame(token))`. That record is what gets
//! XOR-shared between holder and prover in 2PC mode.
//!
//! The holder turns its asset into a histogram outside the circuit and feeds
//! it in as slots of `(tag, freq, valid)`. Inside the circuit each pair's
//! tokens are looked up among the slots, `(f_i - f_j) mod s_ij` is computed by
//! restoring division and compared against the tolerance, and the matches are
//! summed. Comparing the sum with the threshold happens in the clear.

use zeroize::Zeroizing;

use super::circuit::{bytes_to_bits, to_bits, BooleanCircuit, CircuitBuilder, Wire};
use super::GcError;
use crate::crypto::{frame_into, sha256};
use crate::freqywm::{pair_selector, FreqySecret, TokenHistogram};

pub const PAIR_BYTES: usize = 10;
pub const MAX_PAIRS: usize = 8;
pub const MAX_SLOTS: usize = 1024;
/// Largest usable modulus; `s_ij` lives in `[1, 256]`.
pub const MAX_MODULUS: u64 = 256;
pub const FREQ_BITS: usize = 16;
const TAG_BITS: usize = 32;
const MOD_BITS: usize = 9;
const SLOT_BITS: usize = TAG_BITS + FREQ_BITS + 1;

pub fn token_tag(token: &[u8]) -> u32 {
    let mut buf = Vec::with_capacity(token.len() + 8);
    frame_into(&mut buf, token);
    let d = sha256(&buf);
    u32::from_be_bytes(d[..4].try_into().unwrap())
}

/// Compiles a FreqyWM secret into the per-pair records the circuit consumes.
pub fn compile_secret(secret: &FreqySecret) -> Result<Zeroizing<Vec<u8>>, GcError> {
    if secret.pairs.is_empty() || secret.pairs.len() > MAX_PAIRS {
        return Err(GcError::Params(format!(
            "{} pairs; 2PC mode supports 1..={MAX_PAIRS}",
            secret.pairs.len()
        )));
    }
    if secret.modulus > MAX_MODULUS {
        return Err(GcError::Params(format!(
            "modulus {} exceeds {MAX_MODULUS}",
            secret.modulus
        )));
    }
    let mut out = Zeroizing::new(Vec::with_capacity(secret.pairs.len() * PAIR_BYTES));
    for (u_i, u_j) in &secret.pairs {
        let s = pair_selector(u_i, u_j, &secret.key, secret.modulus).map_err(|e| GcError::Params(e.to_string()))?;
        out.extend_from_slice(&token_tag(u_i).to_be_bytes());
        out.extend_from_slice(&token_tag(u_j).to_be_bytes());
        out.extend_from_slice(&(s as u16).to_be_bytes());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReducedParams {
    pub pairs: usize,
    pub slots: usize,
    pub tolerance: u32,
}

impl ReducedParams {
    pub fn validate(&self) -> Result<(), GcError> {
        if self.pairs == 0 || self.pairs > MAX_PAIRS {
            return Err(GcError::Params(format!("pairs must be in 1..={MAX_PAIRS}")));
        }
        if self.slots == 0 || self.slots > MAX_SLOTS {
            return Err(GcError::Params(format!("slots must be in 1..={MAX_SLOTS}")));
        }
        if self.tolerance >= 1 << FREQ_BITS {
            return Err(GcError::Params(format!("tolerance must fit in {FREQ_BITS} bits")));
        }
        Ok(())
    }

    pub fn share_len(&self) -> usize {
        self.pairs * PAIR_BYTES
    }

    pub fn garbler_inputs(&self) -> usize {
        self.share_len() * 8
    }

    pub fn evaluator_inputs(&self) -> usize {
        self.share_len() * 8 + self.slots * SLOT_BITS
    }

    pub fn count_width(&self) -> usize {
        (usize::BITS - self.pairs.leading_zeros()) as usize
    }
}

/// Slot count for an asset with `distinct` tokens: a multiple of 16, so the
/// circuit shape reveals little about the exact vocabulary size.
pub fn slots_for(distinct: usize) -> usize {
    distinct.max(1).div_ceil(16) * 16
}

/// Wire positions of a big-endian integer field inside a share's bit string.
fn field(base: &[Wire], offset: usize, nbytes: usize, width: usize) -> Vec<Wire> {
    (0..width)
        .map(|q| base[(offset + nbytes - 1 - q / 8) * 8 + q % 8])
        .collect()
}

pub fn build_verify_circuit(params: &ReducedParams) -> Result<BooleanCircuit, GcError> {
    params.validate()?;
    let g = params.garbler_inputs() as u32;
    let e = params.evaluator_inputs() as u32;
    let mut b = CircuitBuilder::new(g, e);
    let share_bits = params.garbler_inputs() as u32;

    let secret: Vec<Wire> = (0..share_bits)
        .map(|i| {
            let p = b.garbler_input(i);
            let h = b.evaluator_input(i);
            b.xor(p, h)
        })
        .collect();

    struct Slot {
        tag: Vec<Wire>,
        freq: Vec<Wire>,
        valid: Wire,
    }
    let slots: Vec<Slot> = (0..params.slots as u32)
        .map(|k| {
            let base = share_bits + k * SLOT_BITS as u32;
            let w = |i: u32| b.evaluator_input(base + i);
            Slot {
                tag: (0..TAG_BITS as u32).map(w).collect(),
                freq: (TAG_BITS as u32..(TAG_BITS + FREQ_BITS) as u32).map(w).collect(),
                valid: w((SLOT_BITS - 1) as u32),
            }
        })
        .collect();

    let tolerance = b.constant_bits(params.tolerance as u64, FREQ_BITS);
    let mut count = b.constant_bits(0, params.count_width());
    for p in 0..params.pairs {
        let off = p * PAIR_BYTES;
        let tag_i = field(&secret, off, 4, TAG_BITS);
        let tag_j = field(&secret, off + 4, 4, TAG_BITS);
        let s = field(&secret, off + 8, 2, MOD_BITS);

        let lookup = |b: &mut CircuitBuilder, tag: &[Wire]| {
            let mut found = b.zero();
            let mut freq = b.constant_bits(0, FREQ_BITS);
            for slot in &slots {
                let eq = b.equal(tag, &slot.tag);
                let hit = b.and(eq, slot.valid);
                found = b.xor(found, hit);
                for (f, &sf) in freq.iter_mut().zip(&slot.freq) {
                    let m = b.and(hit, sf);
                    *f = b.xor(*f, m);
                }
            }
            (found, freq)
        };
        let (found_i, f_i) = lookup(&mut b, &tag_i);
        let (found_j, f_j) = lookup(&mut b, &tag_j);

        // |f_i - f_j| and its sign, in FREQ_BITS + 1 bits.
        let zero = b.zero();
        let mut wide_i = f_i.clone();
        wide_i.push(zero);
        let mut wide_j = f_j.clone();
        wide_j.push(zero);
        let (diff, non_negative) = b.sub(&wide_i, &wide_j);
        let zeros = b.constant_bits(0, FREQ_BITS + 1);
        let (negated, _) = b.sub(&zeros, &diff);
        let magnitude = b.mux_bits(non_negative, &negated[..FREQ_BITS], &diff[..FREQ_BITS]);

        // Restoring division: remainder of magnitude by s.
        let mut rem = b.constant_bits(0, MOD_BITS);
        let mut divisor = s.clone();
        divisor.push(zero);
        for i in (0..FREQ_BITS).rev() {
            let mut shifted = Vec::with_capacity(MOD_BITS + 1);
            shifted.push(magnitude[i]);
            shifted.extend_from_slice(&rem);
            let (reduced, fits) = b.sub(&shifted, &divisor);
            rem = b.mux_bits(fits, &shifted[..MOD_BITS], &reduced[..MOD_BITS]);
        }

        // A negative difference with a non-zero remainder wraps to s - rem.
        let nonzero = b.or_all(&rem);
        let negative = b.inv(non_negative);
        let wrap = b.and(negative, nonzero);
        let (complement, _) = b.sub(&s, &rem);
        let residue = b.mux_bits(wrap, &rem, &complement);

        let mut residue16 = residue;
        residue16.resize(FREQ_BITS, zero);
        let (_, within) = b.sub(&tolerance, &residue16);
        let both = b.and(found_i, found_j);
        let ok = b.and(both, within);
        count = b.increment_by(&count, ok);
    }
    b.build(count)
}

/// Slot bits for a histogram: tag, frequency, valid flag, then zero padding.
pub fn slot_inputs(hist: &TokenHistogram, slots: usize) -> Result<Vec<bool>, GcError> {
    if hist.len() > slots {
        return Err(GcError::Params(format!(
            "{} distinct tokens do not fit in {slots} slots",
            hist.len()
        )));
    }
    let mut bits = Vec::with_capacity(slots * SLOT_BITS);
    for (token, &freq) in hist {
        if freq >= 1 << FREQ_BITS {
            return Err(GcError::Params(format!("token frequency {freq} exceeds {FREQ_BITS} bits")));
        }
        bits.extend(to_bits(token_tag(token) as u64, TAG_BITS));
        bits.extend(to_bits(freq, FREQ_BITS));
        bits.push(true);
    }
    bits.resize(slots * SLOT_BITS, false);
    Ok(bits)
}

/// The evaluator's full input: its share followed by the slots.
pub fn holder_inputs(share: &[u8], hist: &TokenHistogram, params: &ReducedParams) -> Result<Vec<bool>, GcError> {
    if share.len() != params.share_len() {
        return Err(GcError::Width {
            expected: params.share_len(),
            got: share.len(),
        });
    }
    let mut bits = bytes_to_bits(share);
    bits.extend(slot_inputs(hist, params.slots)?);
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::share;
    use crate::freqywm::{insert, match_count, preprocess, InsertParams, TokenDataset};
    use crate::gc::circuit::from_bits;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plain_circuit_count(secret: &FreqySecret, hist: &TokenHistogram, t: u32) -> usize {
        let compiled = compile_secret(secret).unwrap();
        let (h, p) = share(&compiled).unwrap();
        let params = ReducedParams {
            pairs: secret.pairs.len(),
            slots: slots_for(hist.len()),
            tolerance: t,
        };
        let c = build_verify_circuit(&params).unwrap();
        let mut x = bytes_to_bits(p.as_bytes());
        x.extend(holder_inputs(h.as_bytes(), hist, &params).unwrap());
        from_bits(&c.evaluate(&x).unwrap()) as usize
    }

    fn small_dataset(rng: &mut ChaCha8Rng, distinct: usize, len: usize) -> TokenDataset {
        let tokens: Vec<String> = (0..len)
            .map(|_| {
                let r: f64 = rng.gen();
                format!("t{}", ((r * r) * distinct as f64) as usize)
            })
            .collect();
        TokenDataset::from_strs(&tokens)
    }

    #[test]
    fn circuit_count_matches_plaintext() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..6 {
            let d = small_dataset(&mut rng, 40, 600);
            let params = InsertParams {
                modulus: MAX_MODULUS,
                num_pairs: 1 + trial % MAX_PAIRS,
                tolerance: 0,
                budget: 2_000,
            };
            let (dw, secret) = insert(&d, rng.gen(), params, &mut rng).unwrap();
            for (asset, t) in [(&dw, 0u32), (&d, 0), (&d, 3)] {
                let hist = preprocess(asset);
                assert_eq!(
                    plain_circuit_count(&secret, &hist, t),
                    match_count(&hist, &secret, t as u64),
                    "trial {trial}"
                );
            }
        }
    }

    #[test]
    fn residue_arithmetic_exhaustive_corners() {
        // One pair, two slots, every sign/wrap case including s = 256.
        let key = [9u8; 32];
        let secret = FreqySecret { pairs: vec![(b"a".to_vec(), b"b".to_vec())], key, modulus: 256 };
        for (fa, fb) in [(1, 1), (1, 2), (2, 1), (300, 44), (44, 300), (65_535, 1), (1, 65_535), (256, 1), (512, 0)] {
            let hist: TokenHistogram = [(b"a".to_vec(), fa), (b"b".to_vec(), fb)].into_iter().collect();
            for t in [0, 1, 5, 255, 65_535] {
                assert_eq!(
                    plain_circuit_count(&secret, &hist, t),
                    match_count(&hist, &secret, t as u64),
                    "fa={fa} fb={fb} t={t}"
                );
            }
        }
    }

    #[test]
    fn missing_tokens_do_not_match() {
        let secret = FreqySecret { pairs: vec![(b"x".to_vec(), b"y".to_vec())], key: [1; 32], modulus: 256 };
        let hist: TokenHistogram = [(b"x".to_vec(), 5)].into_iter().collect();
        assert_eq!(plain_circuit_count(&secret, &hist, 65_535), 0);
        assert_eq!(plain_circuit_count(&secret, &TokenHistogram::new(), 65_535), 0);
    }

    #[test]
    fn equal_shares_mean_zero_secret() {
        let params = ReducedParams { pairs: 1, slots: 16, tolerance: 0 };
        let c = build_verify_circuit(&params).unwrap();
        let s = vec![0xA5u8; PAIR_BYTES];
        let mut x = bytes_to_bits(&s);
        x.extend(holder_inputs(&s, &TokenHistogram::new(), &params).unwrap());
        // All-zero tags and s = 0 never meet a valid slot.
        assert_eq!(from_bits(&c.evaluate(&x).unwrap()), 0);
    }

    #[test]
    fn tolerance_changes_hash() {
        let a = build_verify_circuit(&ReducedParams { pairs: 2, slots: 16, tolerance: 0 }).unwrap();
        let b = build_verify_circuit(&ReducedParams { pairs: 2, slots: 16, tolerance: 1 }).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.num_inputs(), 2 * 160 + 16 * 49);
    }

    #[test]
    fn parameter_limits() {
        for p in [
            ReducedParams { pairs: 0, slots: 16, tolerance: 0 },
            ReducedParams { pairs: 9, slots: 16, tolerance: 0 },
            ReducedParams { pairs: 1, slots: 0, tolerance: 0 },
            ReducedParams { pairs: 1, slots: 16, tolerance: 1 << 16 },
        ] {
            assert!(build_verify_circuit(&p).is_err());
        }
        let big = FreqySecret { pairs: vec![(b"a".to_vec(), b"b".to_vec())], key: [0; 32], modulus: 257 };
        assert!(compile_secret(&big).is_err());
        let hist: TokenHistogram = [(b"a".to_vec(), 1 << 16)].into_iter().collect();
        assert!(slot_inputs(&hist, 16).is_err());
        let hist: TokenHistogram = (0..17u8).map(|i| (vec![i], 1)).collect();
        assert!(slot_inputs(&hist, 16).is_err());
        assert_eq!(slots_for(0), 16);
        assert_eq!(slots_for(17), 32);
    }
}
