//! The prover service: token store, enclave host, verification sessions and
//! the memoization cache, served over a framed TCP protocol and HTTP/JSON.

pub mod config;
pub mod enclave_host;
pub mod http;
pub mod keys;
pub mod ratelimit;
pub mod server;
pub mod session;
pub mod state;
pub mod store;
pub mod tap;

pub use config::Config;
pub use server::Server;
pub use state::{AppState, StatsSnapshot};
