//! Software stand-in for a trusted execution environment: measured programs,
//! manufacturer-signed attestation, an attested channel, controlled
//! invocation and erase-on-exit.

pub mod attest;
pub mod channel;
pub mod child;
pub mod enclave;
pub mod keys;
pub mod program;

pub use attest::{AttestError, AttestationReport, HolderHandshake};
pub use channel::SecureChannel;
pub use child::{ChildLink, ChildOptions};
pub use enclave::{Enclave, EnclaveLink, VerifyOutcome};
pub use program::{EnclaveConfig, EnclaveProgram};
