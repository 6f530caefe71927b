//! Discrete-time simulator of an unstructured peer-to-peer file-sharing
//! network with trust-aware search, adaptive overlay topology, and
//! privacy-preserving lookup.
//!
//! The overlay starts as a power-law graph of immutable connectivity edges.
//! Peers issue zipf/Poisson-driven queries, rank and verify each other
//! through Beta-reputation trust with bounded LRU caches and two-phase trust
//! queries, and rewire community edges after every verified download, so
//! semantic communities of honest peers emerge while malicious peers drift
//! to the fringe. Three privacy schemes (trusted proxy, partial-hash lookup
//! with Bloom-filter elimination, and sealed transfer) run as message-level
//! protocols on top of the same machinery.

pub mod adaptation;
pub mod adversary;
pub mod config;
pub mod content;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod overlay;
pub mod privacy;
pub mod reputation;
pub mod rng;
pub mod search;

pub use config::SimConfig;
pub use engine::{run_sweep, run_to_dir, RunOutput, Simulation};
pub use error::SimError;
