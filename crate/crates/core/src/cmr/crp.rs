//! Lag conditional response probabilities.
//!
//! The analytic CRP averages, over conditioning positions `i`, the
//! probability that recall of item `i` is followed by item `i + lag`. For each
//! lag only positions with `|lag| <= i < N - max(|lag|, 1)` contribute. This is
//! the attention-CRP window, except that the last study item never conditions:
//! it has no successor in the list, whereas in the repeated prompt the token
//! after it is the start of the second repeat.

use super::memory::{encode_list, identity_list};
use super::params::CmrParams;
use super::recall::RecallTrace;
use crate::error::{Error, Result};
use crate::lag::LagProfile;
use crate::stats::mean_and_population_variance;

/// Conditioning positions that contribute to `lag` on a list of `n` items.
pub(crate) fn conditioning_window(lag: i64, n: usize) -> std::ops::Range<usize> {
    let a = lag.unsigned_abs() as usize;
    let hi = n.saturating_sub(a.max(1));
    a..hi.max(a)
}

pub(crate) fn window_contains(lag: i64, n: usize, i: usize) -> bool {
    conditioning_window(lag, n).contains(&i)
}

pub(crate) fn window_len(lag: i64, n: usize) -> usize {
    conditioning_window(lag, n).len()
}

pub(crate) fn check_window(list_len: usize, lag_range: usize) -> Result<()> {
    if list_len <= 2 * lag_range {
        return Err(Error::InvalidParameter(format!(
            "list length {list_len} too short for lag range {lag_range} (need > {})",
            2 * lag_range
        )));
    }
    Ok(())
}

/// Single-transition recall distributions, one row per conditioning position.
pub(crate) fn transition_rows(params: &CmrParams, list_len: usize) -> Result<Vec<Vec<f64>>> {
    let items = identity_list(list_len);
    let (encoded, _) = encode_list(&items, params)?;
    items
        .iter()
        .map(|&item| {
            let mut state = encoded.clone();
            state.retrieve(item, params)?;
            state.next_recall_distribution(params.inv_temp())
        })
        .collect()
}

/// Window-averaged lag profile of a row-per-position transition matrix.
/// Mass outside `[-L, L]` is dropped.
pub(crate) fn profile_from_rows(rows: &[Vec<f64>], lag_range: usize) -> Result<LagProfile> {
    let n = rows.len();
    check_window(n, lag_range)?;
    let l = lag_range as i64;
    let mut mean = Vec::with_capacity(2 * lag_range + 1);
    let mut variance = Vec::with_capacity(2 * lag_range + 1);
    let mut count = Vec::with_capacity(2 * lag_range + 1);
    for lag in -l..=l {
        let masses: Vec<f64> = conditioning_window(lag, n)
            .map(|i| rows[i][(i as i64 + lag) as usize])
            .collect();
        let (m, v) = mean_and_population_variance(&masses);
        mean.push(m);
        variance.push(v);
        count.push(masses.len() as u64);
    }
    LagProfile::new(lag_range, mean, variance, count)
}

/// Expected single-transition CRP of the model with `params` on a list of
/// `list_len` distinct items.
pub fn analytic_crp(params: &CmrParams, list_len: usize, lag_range: usize) -> Result<LagProfile> {
    check_window(list_len, lag_range)?;
    profile_from_rows(&transition_rows(params, list_len)?, lag_range)
}

/// Frequency of each lag over the first transition of every trace, using the
/// same per-lag conditioning window as [`analytic_crp`].
///
/// `variance` holds the Bernoulli variance `p (1 - p)` of a single draw, so
/// `variance / count` is the squared standard error of `mean`.
pub fn transition_frequencies(traces: &[RecallTrace], lag_range: usize) -> Result<LagProfile> {
    let Some(first) = traces.first() else {
        return Err(Error::Precondition("no traces".into()));
    };
    let n = first.list_len;
    check_window(n, lag_range)?;
    let len = 2 * lag_range + 1;
    let l = lag_range as i64;
    let mut hits = vec![0u64; len];
    let mut opportunities = vec![0u64; len];
    for trace in traces {
        let Some((from, to)) = trace.transitions().next() else {
            continue;
        };
        let observed = to as i64 - from as i64;
        for lag in -l..=l {
            if conditioning_window(lag, n).contains(&from) {
                let k = (lag + l) as usize;
                opportunities[k] += 1;
                if observed == lag {
                    hits[k] += 1;
                }
            }
        }
    }
    bernoulli_profile(lag_range, &hits, &opportunities)
}

fn bernoulli_profile(lag_range: usize, hits: &[u64], opportunities: &[u64]) -> Result<LagProfile> {
    let mean: Vec<f64> = hits
        .iter()
        .zip(opportunities)
        .map(|(&h, &o)| if o == 0 { 0.0 } else { h as f64 / o as f64 })
        .collect();
    let variance = mean.iter().map(|p| p * (1.0 - p)).collect();
    LagProfile::new(lag_range, mean, variance, opportunities.to_vec())
}

/// Standard multi-recall lag-CRP with availability correction.
///
/// For each transition the numerator is incremented at the observed lag and
/// the denominator at every lag whose target position is inside the list and
/// not yet recalled. Lag 0 is never available. Lags that were never
/// available have count 0 and are reported as missing.
pub fn empirical_crp(traces: &[RecallTrace], lag_range: usize) -> Result<LagProfile> {
    if traces.is_empty() {
        return Err(Error::Precondition("no traces".into()));
    }
    let len = 2 * lag_range + 1;
    let l = lag_range as i64;
    let mut hits = vec![0u64; len];
    let mut opportunities = vec![0u64; len];
    for trace in traces {
        let n = trace.list_len;
        let mut recalled = vec![false; n];
        let positions = &trace.recalled_positions;
        if let Some(&p) = positions.first() {
            recalled[p] = true;
        }
        for w in positions.windows(2) {
            let (from, to) = (w[0] as i64, w[1] as i64);
            for (q, &done) in recalled.iter().enumerate() {
                let lag = q as i64 - from;
                if !done && lag != 0 && lag.abs() <= l {
                    opportunities[(lag + l) as usize] += 1;
                }
            }
            let lag = to - from;
            if lag.abs() <= l {
                hits[(lag + l) as usize] += 1;
            }
            recalled[w[1]] = true;
        }
    }
    bernoulli_profile(lag_range, &hits, &opportunities)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmr::recall::StopReason;

    fn trace(n: usize, positions: &[usize]) -> RecallTrace {
        RecallTrace {
            list_len: n,
            recalled_positions: positions.to_vec(),
            step_distributions: None,
            stop: StopReason::MaxRecalls,
            seed: 0,
            trial: 0,
        }
    }

    #[test]
    fn empirical_sequential_trace() {
        let p = empirical_crp(&[trace(3, &[0, 1, 2])], 2).unwrap();
        assert_eq!(p.mean_at(1), Some(1.0));
        assert_eq!(p.mean_at(2), Some(0.0));
        assert_eq!(p.mean_at(0), None);
        assert_eq!(p.mean_at(-1), None);
        assert_eq!(p.count_at(1), 2);
        assert!(p.means().iter().all(|m| m.is_finite()));
    }

    #[test]
    fn empirical_skip_transition() {
        let p = empirical_crp(&[trace(3, &[0, 2])], 2).unwrap();
        assert_eq!(p.mean_at(2), Some(1.0));
        assert_eq!(p.mean_at(1), Some(0.0));
        assert_eq!(p.count_at(0), 0);
    }

    #[test]
    fn analytic_rejects_short_lists() {
        let p = CmrParams::new(0.5, 0.5, 0.5, 1.0).unwrap();
        assert!(analytic_crp(&p, 10, 5).is_err());
        assert!(analytic_crp(&p, 11, 5).is_ok());
    }

    #[test]
    fn chaining_limit_is_a_forward_step() {
        let p = CmrParams::new(1.0, 1.0, 0.0, 100.0).unwrap();
        let crp = analytic_crp(&p, 30, 5).unwrap();
        for lag in -5..=5 {
            let expect = if lag == 1 { 1.0 } else { 0.0 };
            assert!((crp.mean_at(lag).unwrap() - expect).abs() < 1e-9, "lag {lag}");
        }
    }

    #[test]
    fn moderate_drift_is_forward_asymmetric() {
        let p = CmrParams::new(0.7, 0.7, 0.0, 10.0).unwrap();
        let crp = analytic_crp(&p, 40, 5).unwrap();
        let m = |l| crp.mean_at(l).unwrap();
        assert!(m(1) > m(-1));
        assert!(m(1) > m(2));
    }

    #[test]
    fn analytic_counts_follow_window() {
        let p = CmrParams::new(0.5, 0.5, 0.5, 1.0).unwrap();
        let crp = analytic_crp(&p, 20, 3).unwrap();
        for lag in -3i64..=3 {
            let expect = if lag == 0 { 19 } else { 20 - 2 * lag.unsigned_abs() };
            assert_eq!(crp.count_at(lag), expect);
        }
    }
}
