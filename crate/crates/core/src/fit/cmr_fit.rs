use serde::Serialize;

use super::table::CrpTable;
use super::{objective_weights, weighted_sse};
use crate::cmr::CmrParams;
use crate::error::{Error, Result};
use crate::lag::LagProfile;

/// Entries whose objective is within this of the best are reported as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Best CMR grid point for a lag profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub best_params: CmrParams,
    pub distance: f64,
    /// `q_lag - mean_lag`, zero at undefined lags.
    pub per_lag_residuals: Vec<f64>,
    /// Every grid point whose objective is within [`TIE_TOLERANCE`] of the
    /// best, in enumeration order; the first is `best_params`.
    pub ties: Vec<CmrParams>,
    pub table_index: usize,
}

/// Exhaustive minimum of the fit objective over `table`.
///
/// Table enumeration is lexicographic in (beta_enc, beta_rec, gamma_ft,
/// inv_temp), so the first strict minimum is also the smallest tuple.
pub fn fit_cmr(profile: &LagProfile, table: &CrpTable) -> Result<FitResult> {
    if table.is_empty() {
        return Err(Error::InvalidParameter("CRP table is empty".into()));
    }
    if table.lag_range() != profile.lag_range() {
        return Err(Error::Dimension {
            expected: table.lag_range(),
            got: profile.lag_range(),
        });
    }
    let w = objective_weights(profile)?;
    let target = profile.means();
    let scores: Vec<f64> = table.iter().map(|(_, q)| weighted_sse(&w, target, q)).collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    let distance = scores[best];
    let ties = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s - distance <= TIE_TOLERANCE)
        .map(|(i, _)| table.params(i))
        .collect::<Vec<_>>();
    // The first tie in enumeration order may precede `best` when it is within
    // tolerance but not strictly lower; report the smallest tuple.
    let first_tie = scores.iter().position(|&s| s - distance <= TIE_TOLERANCE).unwrap();
    let q = table.q(first_tie);
    let per_lag_residuals = q
        .iter()
        .zip(target)
        .zip(profile.counts())
        .map(|((q, a), &c)| if c == 0 { 0.0 } else { q - a })
        .collect();
    Ok(FitResult {
        best_params: table.params(first_tie),
        distance: scores[first_tie],
        per_lag_residuals,
        ties,
        table_index: first_tie,
    })
}
