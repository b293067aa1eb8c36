//! Measured enclave program descriptors.

use serde::{Deserialize, Serialize};

use crate::asset::{Mode, VerifierParams};
use crate::crypto::{frame_into, sha256};

pub const PROGRAM_NAME: &str = "puppy-verify";
pub const PROGRAM_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Entry points reachable through `resume`.
pub const ENTRY_INIT: &str = "init";
pub const ENTRY_FINISH: &str = "finish";
pub const ENTRY_OPEN: &str = "open";
pub const ENTRY_VERIFY: &str = "verify";
pub const ENTRY_ERASE: &str = "erase";
pub const ENTRIES: [&str; 5] = [ENTRY_INIT, ENTRY_FINISH, ENTRY_OPEN, ENTRY_VERIFY, ENTRY_ERASE];

/// Everything that changes enclave behaviour, and hence its measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnclaveConfig {
    pub mode: Mode,
    pub verifier: VerifierParams,
    /// Require `id == idgen(owner, digest(D_w), date)` when the secret carries a binding.
    pub idgen_check: bool,
}

impl EnclaveConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            verifier: VerifierParams::default(),
            idgen_check: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnclaveProgram {
    pub name: String,
    pub version: String,
    pub config: EnclaveConfig,
}

impl EnclaveProgram {
    pub fn new(config: EnclaveConfig) -> Self {
        Self {
            name: PROGRAM_NAME.to_string(),
            version: PROGRAM_VERSION.to_string(),
            config,
        }
    }

    /// SHA-256 over the framed name, version and canonical JSON config.
    pub fn measurement(&self) -> [u8; 32] {
        let config = serde_json::to_vec(&self.config).expect("config serialization");
        let mut buf = Vec::new();
        frame_into(&mut buf, self.name.as_bytes());
        frame_into(&mut buf, self.version.as_bytes());
        frame_into(&mut buf, &config);
        sha256(&buf)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("program serialization")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
