//! Synthetic assets for experiments and end-to-end runs.

use puppy_core::freqywm::TokenDataset;
use puppy_core::obt::NumericTable;
use rand::Rng;
use rand_distr::{Distribution, Zipf};

/// Zipf-distributed tokens over a vocabulary of `vocab` words. Random word
/// spellings keep independently drawn datasets unrelated.
pub fn token_dataset<R: Rng>(vocab: usize, len: usize, rng: &mut R) -> TokenDataset {
    let tag: u32 = rng.gen();
    let zipf = Zipf::new(vocab as u64, 1.0).expect("vocab >= 1");
    let tokens = (0..len)
        .map(|_| format!("t{tag:08x}-{}", zipf.sample(rng) as u64).into_bytes())
        .collect();
    TokenDataset::new(tokens)
}

/// Token file with roughly 1,000 distinct tokens.
pub fn token_file<R: Rng>(rng: &mut R) -> Vec<u8> {
    token_dataset(1_000, 30_000, rng).to_bytes()
}

/// Zero-centred Gaussian table as CSV.
pub fn table_file<R: Rng>(rows: usize, rng: &mut R) -> Vec<u8> {
    NumericTable::gaussian(rows, 0.0, 1.0, rng).to_csv()
}

#[cfg(test)]
mod tests {
    use super::*;
    use puppy_core::freqywm::preprocess;
    use rand::SeedableRng;

    #[test]
    fn token_files_are_near_a_thousand_distinct() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let d = TokenDataset::parse(&token_file(&mut rng)).unwrap();
        let distinct = preprocess(&d).len();
        assert!((900..=1_000).contains(&distinct), "{distinct}");
    }
}
