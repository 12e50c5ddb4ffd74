//! Replay-based evidence generation and verification for data-removal
//! compliance in item-based collaborative filtering platforms.
//!
//! The library simulates a recommendation platform (honest or violating),
//! maintains a community-side auxiliary similarity map and per-item clusters,
//! selects probing items, runs probing rounds whose outcomes are committed to
//! a hash-chained ledger, and lets an independent judge re-verify everything.

pub mod community;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod judge;
pub mod ledger;
pub mod mpc;
pub mod platform;
pub mod probing;
pub mod similarity;
pub mod types;

pub use error::{Error, Result};
