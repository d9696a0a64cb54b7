//! Contract-driven auditing of crowdsourced quality-of-experience ratings.
//!
//! Ratings are grouped per edge (a system response to one utterance); each
//! edge's rating vector is summarized, tested against a family of contracts,
//! and aggregated into per-group satisfaction vectors.

pub mod audit;
pub mod contract;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod ratings;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
