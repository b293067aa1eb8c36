//! Experiments over the verification service: the cache hit-ratio study and
//! the per-task latency breakdown.

pub mod cache_study;
pub mod datasets;
pub mod latency;
pub mod local;
pub mod memscan;
pub mod plain;
