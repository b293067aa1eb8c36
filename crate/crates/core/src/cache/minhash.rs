//! MinHash signatures, bucket keys and Jaccard similarity.

use std::collections::HashSet;

use sha2::{Digest, Sha256};

use crate::asset::Asset;

/// Mersenne prime `2^61 - 1` for the universal hash family.
const PRIME: u64 = (1 << 61) - 1;

/// Bucket key of an asset with no features.
pub const EMPTY_BUCKET: [u8; 32] = [0; 32];

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MinHashParams {
    pub num_perm: usize,
    /// Rows of the first band that feed the bucket key.
    pub band_rows: usize,
    pub seed: u64,
}

impl Default for MinHashParams {
    fn default() -> Self {
        Self {
            num_perm: 128,
            band_rows: 1,
            seed: 0x5eed,
        }
    }
}

impl MinHashParams {
    /// Probability that two sets with Jaccard index `j` share a bucket key.
    pub fn collision_probability(&self, j: f64) -> f64 {
        j.powi(self.band_rows as i32)
    }
}

/// Set of byte-string features of an asset: `token || 0 || count` per
/// distinct token, or `pk || 0 || value` per row.
///
/// Counts are part of a token feature since a frequency watermark lives
/// entirely in them; two datasets over one vocabulary must not look alike.
pub fn features(asset: &Asset) -> HashSet<Vec<u8>> {
    match asset {
        Asset::Tokens(d) => crate::freqywm::preprocess(d)
            .into_iter()
            .map(|(t, n)| {
                let mut f = t;
                f.push(0);
                f.extend_from_slice(&n.to_be_bytes());
                f
            })
            .collect(),
        Asset::Table(t) => t
            .rows
            .iter()
            .map(|(pk, v)| {
                let mut f = pk.clone();
                f.push(0);
                f.extend_from_slice(&v.to_bits().to_be_bytes());
                f
            })
            .collect(),
    }
}

fn feature_hash(f: &[u8]) -> u64 {
    let d = Sha256::digest(f);
    u64::from_be_bytes(d[..8].try_into().unwrap()) % PRIME
}

fn mul_mod(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % PRIME as u128) as u64
}

/// `(a_i, b_i)` coefficients of the permutation family for `params`.
fn coefficients(params: &MinHashParams) -> Vec<(u64, u64)> {
    (0..params.num_perm as u64)
        .map(|i| {
            let mut h = Sha256::new();
            h.update(b"minhash-perm");
            h.update(params.seed.to_be_bytes());
            h.update(i.to_be_bytes());
            let d = h.finalize();
            let a = u64::from_be_bytes(d[..8].try_into().unwrap()) % (PRIME - 1) + 1;
            let b = u64::from_be_bytes(d[8..16].try_into().unwrap()) % PRIME;
            (a, b)
        })
        .collect()
}

/// `num_perm` minimum hash values; empty input gives an empty signature.
pub fn signature<'a, I>(features: I, params: &MinHashParams) -> Vec<u64>
where
    I: IntoIterator<Item = &'a Vec<u8>>,
{
    let coeffs = coefficients(params);
    let mut sig = vec![u64::MAX; params.num_perm];
    let mut any = false;
    for f in features {
        any = true;
        let x = feature_hash(f);
        for (slot, &(a, b)) in sig.iter_mut().zip(&coeffs) {
            let v = (mul_mod(a, x) + b) % PRIME;
            if v < *slot {
                *slot = v;
            }
        }
    }
    if any {
        sig
    } else {
        Vec::new()
    }
}

/// SHA-256 over the first band of the signature.
pub fn bucket_key(sig: &[u64], params: &MinHashParams) -> [u8; 32] {
    if sig.is_empty() {
        return EMPTY_BUCKET;
    }
    let mut h = Sha256::new();
    for v in sig.iter().take(params.band_rows.max(1)) {
        h.update(v.to_be_bytes());
    }
    h.finalize().into()
}

pub fn phash(asset: &Asset, params: &MinHashParams) -> [u8; 32] {
    bucket_key(&signature(&features(asset), params), params)
}

/// Jaccard index of two feature sets in percent; 100 when both are empty.
pub fn jaccard_sets(a: &HashSet<Vec<u8>>, b: &HashSet<Vec<u8>>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 100.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    100.0 * inter as f64 / union as f64
}

pub fn jaccard(a: &Asset, b: &Asset) -> f64 {
    jaccard_sets(&features(a), &features(b))
}
