//! Frequency-histogram dataset watermarking.
//!
//! A watermark is a list of token pairs `(u_i, u_j)` whose frequencies satisfy
//! `(f_i - f_j) mod s_ij <= t`, where `s_ij` is a keyed hash of the pair reduced
//! modulo the secret integer `z`. Detection counts satisfied pairs and accepts
//! once at least `k` of them hold.
//!
//! Insertion here is greedy: candidate pairs are ranked by the number of token
//! edits needed to satisfy their congruence, and the cheapest disjoint pairs
//! are taken until the requested count is reached.

use std::collections::{BTreeMap, HashMap, HashSet};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crypto::{be_bytes_mod, frame_into};

pub const DEFAULT_MODULUS: u64 = 257;
pub const DEFAULT_NUM_PAIRS: usize = 30;
pub const DEFAULT_TOLERANCE: u64 = 0;
/// Fraction of `|L_wm|` that must match for acceptance by default.
pub const DEFAULT_MIN_FRACTION: f64 = 0.6;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FreqyError {
    #[error("modulus z must be at least 2, got {0}")]
    Modulus(u64),
    #[error("dataset has {distinct} distinct tokens, need at least {needed}")]
    TooFewTokens { distinct: usize, needed: usize },
    #[error("edit budget exhausted after {achieved} of {requested} pairs")]
    BudgetExhausted { achieved: usize, requested: usize },
    #[error("dataset is not valid UTF-8 text")]
    Encoding,
    #[error("malformed secret: {0}")]
    Secret(String),
}

pub type Token = Vec<u8>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenDataset {
    pub tokens: Vec<Token>,
}

impl TokenDataset {
    pub fn new(tokens: Vec<Token>) -> Self {
        Self { tokens }
    }

    pub fn from_strs<S: AsRef<str>>(tokens: &[S]) -> Self {
        Self::new(tokens.iter().map(|s| s.as_ref().as_bytes().to_vec()).collect())
    }

    /// Newline-delimited UTF-8. A trailing newline does not add an empty token.
    pub fn parse(text: &[u8]) -> Result<Self, FreqyError> {
        let text = std::str::from_utf8(text).map_err(|_| FreqyError::Encoding)?;
        Ok(Self::new(
            text.lines().map(|l| l.as_bytes().to_vec()).collect(),
        ))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.tokens.iter().map(|t| t.len() + 1).sum());
        for t in &self.tokens {
            out.extend_from_slice(t);
            out.push(b'\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub type TokenHistogram = BTreeMap<Token, u64>;

pub fn preprocess(dataset: &TokenDataset) -> TokenHistogram {
    let mut hist = TokenHistogram::new();
    for t in &dataset.tokens {
        *hist.entry(t.clone()).or_insert(0) += 1;
    }
    hist
}

#[derive(Clone, PartialEq, Eq)]
pub struct FreqySecret {
    pub pairs: Vec<(Token, Token)>,
    pub key: [u8; 32],
    pub modulus: u64,
}

impl Drop for FreqySecret {
    fn drop(&mut self) {
        use zeroize::Zeroize;
        self.key.zeroize();
        for (a, b) in &mut self.pairs {
            a.zeroize();
            b.zeroize();
        }
    }
}

impl std::fmt::Debug for FreqySecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FreqySecret")
            .field("pairs", &self.pairs.len())
            .field("modulus", &self.modulus)
            .finish_non_exhaustive()
    }
}

#[derive(Serialize, Deserialize)]
struct SecretFile {
    version: u32,
    #[serde(rename = "K")]
    key: String,
    z: u64,
    pairs: Vec<[String; 2]>,
}

impl FreqySecret {
    pub fn to_json(&self) -> Vec<u8> {
        let file = SecretFile {
            version: 1,
            key: B64.encode(self.key),
            z: self.modulus,
            pairs: self
                .pairs
                .iter()
                .map(|(a, b)| [B64.encode(a), B64.encode(b)])
                .collect(),
        };
        serde_json::to_vec(&file).expect("secret serialization")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, FreqyError> {
        let file: SecretFile =
            serde_json::from_slice(bytes).map_err(|e| FreqyError::Secret(e.to_string()))?;
        if file.version != 1 {
            return Err(FreqyError::Secret(format!("unsupported version {}", file.version)));
        }
        let key: [u8; 32] = B64
            .decode(&file.key)
            .ok()
            .and_then(|k| k.try_into().ok())
            .ok_or_else(|| FreqyError::Secret("K must be 32 bytes".into()))?;
        if file.z < 2 {
            return Err(FreqyError::Modulus(file.z));
        }
        let pairs = file
            .pairs
            .iter()
            .map(|[a, b]| Ok((B64.decode(a)?, B64.decode(b)?)))
            .collect::<Result<Vec<_>, base64::DecodeError>>()
            .map_err(|e| FreqyError::Secret(e.to_string()))?;
        Ok(Self {
            pairs,
            key,
            modulus: file.z,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectParams {
    /// Per-pair tolerance `t`.
    pub tolerance: u64,
    /// Minimum number of matching pairs `k`.
    pub min_pairs: usize,
}

impl DetectParams {
    pub fn for_pairs(num_pairs: usize, tolerance: u64, min_fraction: f64) -> Self {
        let k = ((num_pairs as f64) * min_fraction).ceil() as usize;
        Self {
            tolerance,
            min_pairs: k.max(1),
        }
    }

    pub fn defaults_for(num_pairs: usize) -> Self {
        Self::for_pairs(num_pairs, DEFAULT_TOLERANCE, DEFAULT_MIN_FRACTION)
    }
}

/// `s_ij = SHA-256(frame(u_i) || frame(u_j) || K) mod z`, with a zero residue
/// mapped to `z` so the result is always a usable modulus in `[1, z]`.
pub fn pair_selector(u_i: &[u8], u_j: &[u8], key: &[u8; 32], z: u64) -> Result<u64, FreqyError> {
    if z < 2 {
        return Err(FreqyError::Modulus(z));
    }
    let mut buf = Vec::with_capacity(16 + u_i.len() + u_j.len() + 32);
    frame_into(&mut buf, u_i);
    frame_into(&mut buf, u_j);
    buf.extend_from_slice(key);
    let digest = Sha256::digest(&buf);
    Ok(match be_bytes_mod(&digest, z) {
        0 => z,
        s => s,
    })
}

/// Non-negative `(f_i - f_j) mod s`.
pub fn pair_residue(f_i: u64, f_j: u64, s: u64) -> u64 {
    (f_i as i128 - f_j as i128).rem_euclid(s as i128) as u64
}

/// Number of secret pairs present in `hist` whose congruence holds.
pub fn match_count(hist: &TokenHistogram, secret: &FreqySecret, tolerance: u64) -> usize {
    secret
        .pairs
        .iter()
        .filter(|(u_i, u_j)| {
            let (Some(&f_i), Some(&f_j)) = (hist.get(u_i), hist.get(u_j)) else {
                return false;
            };
            // A modulus < 2 cannot come from a well-formed secret; count it as a miss.
            let Ok(s) = pair_selector(u_i, u_j, &secret.key, secret.modulus) else {
                return false;
            };
            pair_residue(f_i, f_j, s) <= tolerance
        })
        .count()
}

pub fn detect(dataset: &TokenDataset, secret: &FreqySecret, params: DetectParams) -> bool {
    detect_histogram(&preprocess(dataset), secret, params)
}

pub fn detect_histogram(hist: &TokenHistogram, secret: &FreqySecret, params: DetectParams) -> bool {
    match_count(hist, secret, params.tolerance) >= params.min_pairs
}

#[derive(Clone, Copy, Debug)]
pub struct InsertParams {
    pub modulus: u64,
    pub num_pairs: usize,
    pub tolerance: u64,
    /// Maximum total number of token insertions plus deletions.
    pub budget: u64,
}

impl Default for InsertParams {
    fn default() -> Self {
        Self {
            modulus: DEFAULT_MODULUS,
            num_pairs: DEFAULT_NUM_PAIRS,
            tolerance: DEFAULT_TOLERANCE,
            budget: 2_000,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    i: usize,
    j: usize,
    cost: u64,
    /// Signed frequency change for token `i` and token `j`.
    delta_i: i64,
    delta_j: i64,
    weight: u64,
}

/// Cheapest single-token edit making `(f_i - f_j) mod s <= t`.
fn cheapest_edit(f_i: u64, f_j: u64, s: u64, t: u64) -> (u64, i64, i64) {
    let r = pair_residue(f_i, f_j, s);
    if r <= t {
        return (0, 0, 0);
    }
    let up = s - r; // raise f_i (or lower f_j) to land on residue 0
    let down = r - t; // lower f_i (or raise f_j) to land on residue t
    // Removals only when the token keeps at least one occurrence.
    if down < up {
        if f_i > down {
            (down, -(down as i64), 0)
        } else {
            (down, 0, down as i64)
        }
    } else if f_j > up {
        (up, 0, -(up as i64))
    } else {
        (up, up as i64, 0)
    }
}

/// Greedy watermark insertion.
pub fn insert<R: RngCore>(
    original: &TokenDataset,
    key: [u8; 32],
    params: InsertParams,
    rng: &mut R,
) -> Result<(TokenDataset, FreqySecret), FreqyError> {
    if params.modulus < 2 {
        return Err(FreqyError::Modulus(params.modulus));
    }
    let hist = preprocess(original);
    let needed = 2 * params.num_pairs;
    if hist.len() < needed {
        return Err(FreqyError::TooFewTokens {
            distinct: hist.len(),
            needed,
        });
    }
    let tokens: Vec<(&Token, u64)> = hist.iter().map(|(t, &f)| (t, f)).collect();
    let n = tokens.len();

    let pool = candidate_pairs(n, params.num_pairs, rng);
    let mut candidates: Vec<Candidate> = pool
        .into_iter()
        .map(|(i, j)| {
            let s = pair_selector(tokens[i].0, tokens[j].0, &key, params.modulus)
                .expect("modulus checked");
            let (cost, delta_i, delta_j) = cheapest_edit(tokens[i].1, tokens[j].1, s, params.tolerance);
            Candidate {
                i,
                j,
                cost,
                delta_i,
                delta_j,
                weight: tokens[i].1 + tokens[j].1,
            }
        })
        .collect();
    // Cheapest first; among equals prefer rare tokens, which random deletions
    // disturb less often.
    candidates.sort_by_key(|c| (c.cost, c.weight, c.i, c.j));

    let mut used = HashSet::new();
    let mut remaining = params.budget;
    let mut chosen = Vec::with_capacity(params.num_pairs);
    for c in candidates {
        if chosen.len() == params.num_pairs || c.cost > remaining {
            break;
        }
        if used.contains(&c.i) || used.contains(&c.j) {
            continue;
        }
        used.insert(c.i);
        used.insert(c.j);
        remaining -= c.cost;
        chosen.push(c);
    }
    if chosen.len() < params.num_pairs {
        return Err(FreqyError::BudgetExhausted {
            achieved: chosen.len(),
            requested: params.num_pairs,
        });
    }

    let mut edits: HashMap<&Token, i64> = HashMap::new();
    for c in &chosen {
        if c.delta_i != 0 {
            edits.insert(tokens[c.i].0, c.delta_i);
        }
        if c.delta_j != 0 {
            edits.insert(tokens[c.j].0, c.delta_j);
        }
    }
    let watermarked = apply_edits(original, &edits, rng);
    let secret = FreqySecret {
        pairs: chosen
            .iter()
            .map(|c| (tokens[c.i].0.clone(), tokens[c.j].0.clone()))
            .collect(),
        key,
        modulus: params.modulus,
    };
    debug_assert_eq!(
        match_count(&preprocess(&watermarked), &secret, params.tolerance),
        params.num_pairs
    );
    Ok((watermarked, secret))
}

fn candidate_pairs<R: RngCore>(n: usize, num_pairs: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let all = n * (n - 1);
    let target = (num_pairs * 128).max(4096);
    if all <= target {
        return (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
    }
    let mut seen = HashSet::with_capacity(target);
    while seen.len() < target {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i != j {
            seen.insert((i, j));
        }
    }
    let mut pool: Vec<_> = seen.into_iter().collect();
    pool.sort_unstable();
    pool
}

/// Removes and duplicates occurrences at random positions.
fn apply_edits<R: RngCore>(
    original: &TokenDataset,
    edits: &HashMap<&Token, i64>,
    rng: &mut R,
) -> TokenDataset {
    let mut removals: HashMap<&Token, Vec<usize>> = HashMap::new();
    for (idx, t) in original.tokens.iter().enumerate() {
        if edits.get(t).is_some_and(|&d| d < 0) {
            removals.entry(t).or_default().push(idx);
        }
    }
    let mut drop = vec![false; original.len()];
    for (t, positions) in &mut removals {
        let count = (-edits[t]) as usize;
        positions.shuffle(rng);
        for &p in positions.iter().take(count) {
            drop[p] = true;
        }
    }
    let mut kept: Vec<Token> = original
        .tokens
        .iter()
        .zip(&drop)
        .filter(|(_, &d)| !d)
        .map(|(t, _)| t.clone())
        .collect();

    let mut additions: Vec<&Token> = edits
        .iter()
        .filter(|(_, &d)| d > 0)
        .flat_map(|(t, &d)| std::iter::repeat_n(*t, d as usize))
        .collect();
    additions.sort();
    for t in additions {
        let at = rng.gen_range(0..=kept.len());
        kept.insert(at, t.clone());
    }
    TokenDataset::new(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn zipf_dataset(rng: &mut ChaCha8Rng, distinct: usize, len: usize) -> TokenDataset {
        let weights: Vec<f64> = (1..=distinct).map(|r| 1.0 / r as f64).collect();
        let dist = rand::distributions::WeightedIndex::new(&weights).unwrap();
        TokenDataset::new(
            (0..len)
                .map(|_| format!("tok{}", rng.sample(&dist)).into_bytes())
                .collect(),
        )
    }

    #[test]
    fn preprocess_counts() {
        let h = preprocess(&TokenDataset::from_strs(&["a", "a", "b"]));
        assert_eq!(h.len(), 2);
        assert_eq!(h[&b"a".to_vec()], 2);
        assert_eq!(h[&b"b".to_vec()], 1);
        assert!(preprocess(&TokenDataset::default()).is_empty());
        let p = preprocess(&TokenDataset::from_strs(&["b", "a", "a"]));
        assert_eq!(h, p);
    }

    #[test]
    fn parse_and_serialize() {
        let d = TokenDataset::parse(b"x\ny\nx\n").unwrap();
        assert_eq!(d, TokenDataset::from_strs(&["x", "y", "x"]));
        assert_eq!(d.to_bytes(), b"x\ny\nx\n");
        assert_eq!(TokenDataset::parse(&[0xFF]), Err(FreqyError::Encoding));
    }

    #[test]
    fn selector_range_and_determinism() {
        let key = [7u8; 32];
        let a = pair_selector(b"u", b"v", &key, 257).unwrap();
        assert_eq!(a, pair_selector(b"u", b"v", &key, 257).unwrap());
        assert!((1..=257).contains(&a));
        assert_eq!(pair_selector(b"u", b"v", &key, 1), Err(FreqyError::Modulus(1)));
    }

    #[test]
    fn selector_is_uniform() {
        // Chi-square over the z values the clamp can produce.
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let z = 17u64;
        let mut counts = vec![0f64; z as usize];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let key = [3u8; 32];
        let trials = 10_000;
        for _ in 0..trials {
            let a = rng.next_u64().to_be_bytes();
            let b = rng.next_u64().to_be_bytes();
            let s = pair_selector(&a, &b, &key, z).unwrap();
            counts[(s - 1) as usize] += 1.0;
        }
        let expected = trials as f64 / z as f64;
        let stat: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new((z - 1) as f64).unwrap().cdf(stat);
        assert!(p > 0.001, "p = {p}");
    }

    #[test]
    fn residue_is_non_negative() {
        assert_eq!(pair_residue(7, 10, 5), 2);
        assert_eq!(pair_residue(10, 7, 3), 0);
        assert_eq!(pair_residue(0, 0, 9), 0);
    }

    #[test]
    fn empty_secret_rejects() {
        let secret = FreqySecret {
            pairs: vec![],
            key: [0; 32],
            modulus: 257,
        };
        let params = DetectParams {
            tolerance: 0,
            min_pairs: 1,
        };
        assert!(!detect(&TokenDataset::from_strs(&["a"]), &secret, params));
    }

    #[test]
    fn constructed_histogram_accepts() {
        // {a:10, b:7}; search a key whose selector for (a, b) is 3 so the
        // arithmetic (10 - 7) mod 3 = 0 is what gets exercised.
        let mut key = [0u8; 32];
        let mut found = false;
        for seed in 0u32..10_000 {
            key[..4].copy_from_slice(&seed.to_be_bytes());
            if pair_selector(b"a", b"b", &key, 257).unwrap() == 3 {
                found = true;
                break;
            }
        }
        assert!(found);
        let mut tokens = vec!["a"; 10];
        tokens.extend(vec!["b"; 7]);
        let secret = FreqySecret {
            pairs: vec![(b"a".to_vec(), b"b".to_vec())],
            key,
            modulus: 257,
        };
        let params = DetectParams {
            tolerance: 0,
            min_pairs: 1,
        };
        assert!(detect(&TokenDataset::from_strs(&tokens), &secret, params));
        // One more `b` gives (10 - 8) mod 3 = 2 > 0.
        tokens.push("b");
        assert!(!detect(&TokenDataset::from_strs(&tokens), &secret, params));
    }

    #[test]
    fn missing_tokens_do_not_count() {
        let secret = FreqySecret {
            pairs: vec![(b"a".to_vec(), b"zz".to_vec())],
            key: [0; 32],
            modulus: 2,
        };
        let h = preprocess(&TokenDataset::from_strs(&["a", "a"]));
        assert_eq!(match_count(&h, &secret, 1000), 0);
    }

    #[test]
    fn zipf_roundtrip_all_pairs_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = zipf_dataset(&mut rng, 1_000, 20_000);
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        let (dw, sec) = insert(&d, key, InsertParams::default(), &mut rng).unwrap();
        assert_eq!(sec.pairs.len(), 30);
        let params = DetectParams {
            tolerance: 0,
            min_pairs: 30,
        };
        assert!(detect(&dw, &sec, params));
        assert_eq!(match_count(&preprocess(&dw), &sec, 0), 30);
        // Pairs are distinct and come from the original vocabulary.
        let orig = preprocess(&d);
        let mut seen = HashSet::new();
        for (a, b) in &sec.pairs {
            assert!(orig.contains_key(a) && orig.contains_key(b));
            assert!(seen.insert((a.clone(), b.clone())));
        }
    }

    #[test]
    fn satisfied_pairs_cost_nothing() {
        // Tolerance larger than any modulus: every pair already holds.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = zipf_dataset(&mut rng, 50, 500);
        let params = InsertParams {
            modulus: 5,
            num_pairs: 10,
            tolerance: 5,
            budget: 0,
        };
        let (dw, sec) = insert(&d, [1; 32], params, &mut rng).unwrap();
        assert_eq!(dw, d);
        assert_eq!(sec.pairs.len(), 10);
    }

    #[test]
    fn budget_exhaustion_reports_progress() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // Distinct frequencies, so almost no pair is free.
        let words: Vec<String> = (0..20).flat_map(|i| std::iter::repeat_n(format!("w{i}"), i + 1)).collect();
        let d = TokenDataset::from_strs(&words);
        let params = InsertParams {
            modulus: 257,
            num_pairs: 10,
            tolerance: 0,
            budget: 0,
        };
        match insert(&d, [4; 32], params, &mut rng) {
            Err(FreqyError::BudgetExhausted { achieved, requested }) => {
                assert_eq!(requested, 10);
                assert!(achieved < 10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_tokens() {
        let d = TokenDataset::from_strs(&["a", "b", "c"]);
        let err = insert(&d, [0; 32], InsertParams::default(), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(
            err.unwrap_err(),
            FreqyError::TooFewTokens {
                distinct: 3,
                needed: 60
            }
        );
    }

    #[test]
    fn deletion_robustness_smoke() {
        // Delete 0.1% of tokens uniformly; the default threshold keeps
        // accepting in at least 90% of trials.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = zipf_dataset(&mut rng, 1_000, 20_000);
        let (dw, sec) = insert(&d, [9; 32], InsertParams::default(), &mut rng).unwrap();
        let params = DetectParams::defaults_for(sec.pairs.len());
        let trials = 50;
        let mut accepted = 0;
        for _ in 0..trials {
            let mut tokens = dw.tokens.clone();
            let remove = tokens.len() / 1000;
            for _ in 0..remove {
                let at = rng.gen_range(0..tokens.len());
                tokens.swap_remove(at);
            }
            if detect(&TokenDataset::new(tokens), &sec, params) {
                accepted += 1;
            }
        }
        assert!(accepted * 10 >= trials * 9, "accepted {accepted}/{trials}");
    }

    #[test]
    fn secret_json_roundtrip_and_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = zipf_dataset(&mut rng, 1_000, 20_000);
        let (_, sec) = insert(&d, [2; 32], InsertParams::default(), &mut rng).unwrap();
        let json = sec.to_json();
        assert_eq!(FreqySecret::from_json(&json).unwrap(), sec);
        assert!((500..8_000).contains(&json.len()), "{} bytes", json.len());
    }

    proptest::proptest! {
        #[test]
        fn permutation_and_monotonicity(seed in 0u64..64, t in 0u64..4, drop in 0usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = zipf_dataset(&mut rng, 80, 800);
            let params = InsertParams { modulus: 31, num_pairs: 8, tolerance: 0, budget: 500 };
            let (dw, sec) = insert(&d, [seed as u8; 32], params, &mut rng).unwrap();
            let mut shuffled = dw.tokens.clone();
            shuffled.shuffle(&mut rng);
            let shuffled = TokenDataset::new(shuffled);
            let base = DetectParams { tolerance: t, min_pairs: 8 - drop.min(7) };
            proptest::prop_assert_eq!(detect(&dw, &sec, base), detect(&shuffled, &sec, base));
            if detect(&dw, &sec, base) {
                let looser = DetectParams { tolerance: t + 1, min_pairs: base.min_pairs.saturating_sub(1).max(1) };
                proptest::prop_assert!(detect(&dw, &sec, looser));
            }
        }
    }
}
