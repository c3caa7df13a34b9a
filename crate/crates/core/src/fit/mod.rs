//! Fitting lag profiles: exhaustive CMR grid search over a precomputed CRP
//! table, and a Gaussian-bump baseline.
//!
//! Both fits minimise the same variance-normalised objective
//! `sum_lag ((model_lag - mean_lag)^2 / Var_lag) / N_lag`, where `N_lag` is the
//! number of defined lags and `Var_lag` is floored by [`variance_floor`].

mod cmr_fit;
mod gaussian;
mod grid;
mod table;

pub use cmr_fit::{fit_cmr, FitResult};
pub use gaussian::{fit_gaussian, gaussian_curve, GaussianFit};
pub use grid::FitGrid;
pub use table::{build_crp_table, build_crp_table_cached, CrpTable, TABLE_FORMAT_VERSION};

use crate::error::{Error, Result};
use crate::lag::LagProfile;

/// `max(var, 1e-8 * max(1, mean^2))`.
pub fn variance_floor(variance: f64, mean: f64) -> f64 {
    variance.max(1e-8 * (mean * mean).max(1.0))
}

/// Per-lag weights `1 / (Var_lag * N_lag)` with zero weight on undefined lags.
pub(crate) fn objective_weights(profile: &LagProfile) -> Result<Vec<f64>> {
    let defined = profile.counts().iter().filter(|&&c| c > 0).count();
    if defined == 0 {
        return Err(Error::Data("lag profile has no defined lags".into()));
    }
    Ok(profile
        .counts()
        .iter()
        .zip(profile.variances())
        .zip(profile.means())
        .map(|((&c, &v), &m)| {
            if c == 0 {
                0.0
            } else {
                1.0 / (variance_floor(v, m) * defined as f64)
            }
        })
        .collect())
}

/// The fit objective of a candidate curve against `profile`.
pub fn objective(profile: &LagProfile, curve: &[f64]) -> Result<f64> {
    if curve.len() != profile.len() {
        return Err(Error::Dimension {
            expected: profile.len(),
            got: curve.len(),
        });
    }
    let w = objective_weights(profile)?;
    Ok(weighted_sse(&w, profile.means(), curve))
}

pub(crate) fn weighted_sse(w: &[f64], target: &[f64], curve: &[f64]) -> f64 {
    w.iter()
        .zip(target)
        .zip(curve)
        .map(|((w, a), q)| w * (q - a) * (q - a))
        .sum()
}
