//! Trace-driven KV-cache eviction.
//!
//! This crate holds the allocation-only algorithmic core: the trace data
//! model, recurrence-interval tracking, MRI-centric importance scoring, the
//! lagged-eviction policy together with the per-step baselines it is compared
//! against, attention replay with reconstruction error, a synthetic trace
//! generator with planted recurrence, and the observational statistics.
//!
//! Everything here is `no_std` + `alloc`. File formats, the CLI and parallel
//! sweeps live in the `kvevict` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cache;
pub mod config;
mod error;
pub mod metrics;
pub mod policy;
pub mod record;
pub mod replay;
pub mod scoring;
pub mod trace;
pub mod tracegen;
pub mod tracking;

pub use cache::CacheState;
pub use config::{Budget, HeadMode, PolicyConfig, PolicyKind, ScoreVariant};
pub use error::{Error, Result};
pub use policy::{build_policy, Counters, EvictionDecision, Policy};
pub use record::TokenRecord;
pub use replay::{run, ErrorKind, RunOptions, RunReport, RunSummary};
pub use scoring::ScoreParams;
pub use trace::{Planted, StepRecord, Trace, TraceHeader};
pub use tracegen::{generate, planted_recall, PlantSpec};

/// Decoding step index. Token `i` is created at step `i`.
pub type Step = usize;

/// Absolute token position, prompt tokens included.
pub type TokenIndex = usize;
