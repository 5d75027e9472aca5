//! Trace-driven edge cache simulation.
//!
//! The crate is organised bottom-up:
//!
//! - [`trace`]: request traces, CSV ingestion and synthetic generators.
//! - [`nn`]: a small dense/LSTM network toolkit with hand-written gradients.
//! - [`policy`]: score-based eviction policies (LFU-Δ, LRU-n, FIF).
//! - [`lstm`]: LSTM-Int and LSTM-Req predictors exposed as eviction policies.
//! - [`virtual_cache`]: key-only shadow caches measuring each policy on the live stream.
//! - [`agent`]: the Double-DQN policy selector and its FIF-rank reward.
//! - [`sim`]: end-to-end runs, reports and comparisons.

pub mod agent;
pub mod bundle;
pub mod error;
pub mod lstm;
pub mod nn;
pub mod policy;
pub mod sim;
pub mod trace;
pub mod virtual_cache;

pub use error::{Error, Result};
