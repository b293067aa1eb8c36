//! Garbled-circuit verification: circuits, half-gates garbling, oblivious
//! transfer, the reduced FreqyWM circuit and the two-party exchange.

pub mod circuit;
pub mod garble;
pub mod ot;
pub mod protocol;
pub mod verify;

pub use circuit::{BooleanCircuit, CircuitBuilder, Gate, GateKind};
pub use garble::{decode, encode, eval, garble, DecodingInfo, EncodingInfo, GarbledCircuit, WireLabel};
pub use ot::{OtError, OtReceiver, OtSender};
pub use protocol::{run_2pc_verify, HolderSession, ProverSession};
pub use verify::{build_verify_circuit, compile_secret, ReducedParams};

use crate::wire::AbortCode;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GcError {
    #[error("malformed circuit: {0}")]
    Malformed(String),
    #[error("expected {expected} input bits, got {got}")]
    Width { expected: usize, got: usize },
    #[error("parameters out of range: {0}")]
    Params(String),
    #[error("oblivious transfer failed: {0}")]
    Ot(#[from] OtError),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("peer aborted: {0:?}")]
    Aborted(AbortCode),
}
