//! Episodic-memory model of free recall (CMR), per-head attention metrics,
//! CRP fitting, and a two-layer toy transformer with hand-built induction
//! circuits.
//!
//! The crate is organised around a handful of value types that flow between
//! the modules:
//!
//! * [`cmr::CmrParams`] and [`cmr::MemoryState`] drive the memory model.
//! * [`LagProfile`] is the common currency: both the memory model's
//!   conditional response probabilities and a head's lag-averaged attention
//!   scores are expressed as one.
//! * [`metrics::AttentionMatrix`] carries per-head scores or patterns, either
//!   produced by [`toy::ToyModel::forward`] or read from an [`export`]
//!   directory.
//!
//! Interchangeable algorithms (head metrics, profile fitters, circuit
//! builders) live behind traits in [`registry`] and are looked up by name.

pub mod cmr;
pub mod error;
pub mod export;
pub mod fit;
pub mod lag;
pub mod metrics;
pub mod registry;
pub mod stats;
pub mod toy;

pub use error::{Error, Result};
pub use lag::LagProfile;
