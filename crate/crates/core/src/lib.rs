//! Region-wide capacity-reservation simulator with a two-tier allocation
//! engine: a policy picks per-MSB fractions for each reservation and a
//! deterministic allocator turns them into a server-to-reservation mapping.

pub mod config;
pub mod allocator;
pub mod converter;
pub mod engine;
pub mod error;
pub mod exact;
pub mod metrics;
pub mod objective;
pub mod oracle;
pub mod policies;
pub mod rl;
pub mod topology;
pub mod workload;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
