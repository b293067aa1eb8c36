//! Owner and holder clients for the prover service.

pub mod conn;
pub mod error;
pub mod holder;
pub mod http;
pub mod owner;

pub use error::ClientError;
pub use holder::{verify, LoadedBundle, TaskTimings, Verdict, VerifyOptions, VerifyReport};
pub use owner::{generate, prepare, register, PrepareOptions, Prepared};
