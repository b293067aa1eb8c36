//! Verification-result memoization.

pub mod lru;
pub mod minhash;
pub mod proportional;

pub use lru::{LruCache, LruKey};
pub use minhash::{jaccard, phash, MinHashParams};
pub use proportional::{position, CacheEntry, ProportionalCache, PutOutcome, ServeRule};
