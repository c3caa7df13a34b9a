use nalgebra::DMatrix;

use super::prompt::TokenSequence;
use crate::error::{Error, Result};
use crate::lag::LagProfile;
use crate::stats::mean_and_population_variance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    /// Pre-softmax scores (or raw weights of a linear head).
    Scores,
    /// Post-softmax pattern; rows sum to one.
    Pattern,
    /// 0/1 indicator of ideal prefix-matching cells.
    Target,
}

/// Causal `dest x source` attention matrix of one head. Cells above the
/// diagonal are masked and stored as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    values: DMatrix<f64>,
    kind: AttentionKind,
    layer: usize,
    head: usize,
}

pub const PATTERN_ROW_TOL: f64 = 1e-6;

impl AttentionMatrix {
    /// Builds a matrix, masking the upper triangle. Patterns are checked for
    /// non-negative rows summing to one within `row_tol`.
    pub fn new(
        mut values: DMatrix<f64>,
        kind: AttentionKind,
        layer: usize,
        head: usize,
        row_tol: f64,
    ) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                got: values.ncols(),
            });
        }
        for d in 0..n {
            for s in d + 1..n {
                values[(d, s)] = 0.0;
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite attention value in L{layer}H{head}")));
        }
        if kind == AttentionKind::Pattern {
            for d in 0..n {
                let row = values.row(d);
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&v| v < -row_tol) || (sum - 1.0).abs() > row_tol {
                    return Err(Error::Data(format!(
                        "L{layer}H{head}: pattern row {d} sums to {sum}"
                    )));
                }
            }
        }
        Ok(Self {
            values,
            kind,
            layer,
            head,
        })
    }

    pub fn scores(values: DMatrix<f64>, layer: usize, head: usize) -> Result<Self> {
        Self::new(values, AttentionKind::Scores, layer, head, 0.0)
    }

    pub fn pattern(values: DMatrix<f64>, layer: usize, head: usize) -> Result<Self> {
        Self::new(values, AttentionKind::Pattern, layer, head, PATTERN_ROW_TOL)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn kind(&self) -> AttentionKind {
        self.kind
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn head(&self) -> usize {
        self.head
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn get(&self, dest: usize, source: usize) -> f64 {
        self.values[(dest, source)]
    }
}

/// Ideal prefix-matching indicator: `1` at `(d, s)` iff `s < d` and
/// `x[s - 1] == x[d]`.
pub fn target_pattern(seq: &TokenSequence) -> AttentionMatrix {
    let x = seq.tokens();
    let n = x.len();
    let mut values = DMatrix::zeros(n, n);
    for d in 0..n {
        for s in 1..d {
            if x[s - 1] == x[d] {
                values[(d, s)] = 1.0;
            }
        }
    }
    AttentionMatrix {
        values,
        kind: AttentionKind::Target,
        layer: 0,
        head: 0,
    }
}

/// Fraction of attention mass that lands on ideal prefix-matching cells.
///
/// Only destination rows that contain at least one target cell enter the
/// sum; rows where no earlier occurrence exists cannot express prefix
/// matching. An ideal induction head therefore scores exactly 1.
pub fn matching_score(pattern: &AttentionMatrix, target: &AttentionMatrix) -> Result<f64> {
    if pattern.kind != AttentionKind::Pattern {
        return Err(Error::Precondition("matching score needs a post-softmax pattern".into()));
    }
    if pattern.len() != target.len() {
        return Err(Error::Dimension {
            expected: target.len(),
            got: pattern.len(),
        });
    }
    let mut hit = 0.0;
    let mut total = 0.0;
    for d in 0..pattern.len() {
        let target_row = target.values.row(d);
        if !target_row.iter().any(|&t| t != 0.0) {
            continue;
        }
        let row = pattern.values.row(d);
        total += row.sum();
        hit += row.dot(&target_row);
    }
    if total <= 0.0 {
        return Err(Error::Degenerate(
            "no attention mass on rows with a prefix match; matching score undefined".into(),
        ));
    }
    Ok(hit / total)
}

/// Lag-averaged attention scores on a repeated prompt with repeat length `n`.
///
/// For each lag the terms are `scores[s + n, s + lag]` for `|lag| < s <= n - |lag|`;
/// `mean` is their average, `variance` the population variance across those
/// tokens and `count = n - 2|lag|`.
pub fn attention_crp(scores: &AttentionMatrix, n_repeat: usize, lag_range: usize) -> Result<LagProfile> {
    if scores.kind != AttentionKind::Scores {
        return Err(Error::Precondition("attention CRP is defined on pre-softmax scores".into()));
    }
    if n_repeat <= 2 * lag_range {
        return Err(Error::InvalidParameter(format!(
            "repeat length {n_repeat} too short for lag range {lag_range}"
        )));
    }
    if scores.len() < 2 * n_repeat + 1 {
        return Err(Error::Dimension {
            expected: 2 * n_repeat + 1,
            got: scores.len(),
        });
    }
    let l = lag_range as i64;
    let n = n_repeat as i64;
    let mut mean = Vec::new();
    let mut variance = Vec::new();
    let mut count = Vec::new();
    for lag in -l..=l {
        let a = lag.abs();
        let terms: Vec<f64> = (a + 1..=n - a)
            .map(|s| scores.values[((s + n) as usize, (s + lag) as usize)])
            .collect();
        let (m, v) = mean_and_population_variance(&terms);
        mean.push(m);
        variance.push(v);
        count.push(terms.len() as u64);
    }
    LagProfile::new(lag_range, mean, variance, count)
}
