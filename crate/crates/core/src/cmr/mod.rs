//! Context maintenance and retrieval (CMR) model of free recall.
//!
//! Items are one-hot vectors of dimension `n_items + 1`; the last unit is a
//! dummy stimulus that only carries the initial context. Study positions are
//! 0-based throughout: the item studied at position `p` is item `p` unless a
//! custom list is encoded.

mod context;
mod crp;
mod memory;
mod params;
mod recall;

pub use context::{compute_rho, update_context, ItemEmbedding, TemporalContext};
pub use crp::{analytic_crp, empirical_crp, transition_frequencies};
pub(crate) use crp::{window_contains, window_len};
pub use memory::{encode_list, MemoryState};
pub use params::CmrParams;
pub use recall::{simulate_recall, RecallOptions, RecallStart, RecallTrace, StopReason};

/// Numerically stable softmax of `inv_temp * strengths`.
pub(crate) fn softmax_scaled(strengths: &[f64], inv_temp: f64) -> Vec<f64> {
    let max = strengths
        .iter()
        .map(|s| s * inv_temp)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = strengths.iter().map(|s| (s * inv_temp - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}
