use puppy_core::wire::{AbortCode, ErrCode};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("cannot reach prover {0}")]
    Connect(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("attestation failed: {0}")]
    Attestation(String),
    #[error("prover aborted: {0}")]
    Aborted(AbortCode),
    #[error("prover rejected registration: {0}")]
    Rejected(ErrCode),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("asset: {0}")]
    Asset(String),
    #[error("http: {0}")]
    Http(String),
}

impl ClientError {
    /// Process exit code: 2 for protocol and attestation failures, 3 for usage.
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Usage(_) | ClientError::Asset(_) => 3,
            _ => 2,
        }
    }
}
