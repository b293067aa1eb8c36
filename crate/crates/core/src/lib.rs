//! Publicly verifiable watermarking: watermark schemes, token derivation, a
//! simulated enclave, a similarity-aware result cache and garbled-circuit
//! verification.

pub mod asset;
pub mod cache;
pub mod crypto;
pub mod freqywm;
pub mod gc;
pub mod obt;
pub mod tee;
pub mod wire;
