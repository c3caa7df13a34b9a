//! Per-lag statistics shared by memory-model CRPs and attention CRPs.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean, variance and sample count for every lag in `[-L, L]`.
///
/// Entries with `count == 0` are undefined; [`LagProfile::mean_at`] reports
/// them as `None` and the CSV writer leaves the cells empty.
#[derive(Debug, Clone, PartialEq)]
pub struct LagProfile {
    lag_range: usize,
    mean: Vec<f64>,
    variance: Vec<f64>,
    count: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct LagRow {
    lag: i64,
    mean: Option<f64>,
    variance: Option<f64>,
    count: u64,
}

impl LagProfile {
    pub fn new(lag_range: usize, mean: Vec<f64>, variance: Vec<f64>, count: Vec<u64>) -> Result<Self> {
        let len = 2 * lag_range + 1;
        for (name, got) in [("mean", mean.len()), ("variance", variance.len()), ("count", count.len())] {
            if got != len {
                return Err(Error::Data(format!(
                    "lag profile `{name}` has {got} entries, expected {len}"
                )));
            }
        }
        if let Some(v) = variance.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Data(format!("negative or NaN variance {v}")));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Data("non-finite mean in lag profile".into()));
        }
        Ok(Self {
            lag_range,
            mean,
            variance,
            count,
        })
    }

    /// Profile with the given means, unit variances and unit counts.
    pub fn from_means(lag_range: usize, mean: Vec<f64>) -> Result<Self> {
        let len = mean.len();
        Self::new(lag_range, mean, vec![1.0; len], vec![1; len])
    }

    pub fn lag_range(&self) -> usize {
        self.lag_range
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn lags(&self) -> impl Iterator<Item = i64> + '_ {
        let l = self.lag_range as i64;
        -l..=l
    }

    /// Array index of `lag`, if inside the window.
    pub fn index_of(&self, lag: i64) -> Option<usize> {
        let l = self.lag_range as i64;
        (-l..=l).contains(&lag).then(|| (lag + l) as usize)
    }

    pub fn mean_at(&self, lag: i64) -> Option<f64> {
        let i = self.index_of(lag)?;
        (self.count[i] > 0).then_some(self.mean[i])
    }

    pub fn variance_at(&self, lag: i64) -> Option<f64> {
        let i = self.index_of(lag)?;
        (self.count[i] > 0).then_some(self.variance[i])
    }

    pub fn count_at(&self, lag: i64) -> u64 {
        self.index_of(lag).map_or(0, |i| self.count[i])
    }

    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    pub fn variances(&self) -> &[f64] {
        &self.variance
    }

    pub fn counts(&self) -> &[u64] {
        &self.count
    }

    /// Same means and counts, variances replaced.
    pub fn with_variances(&self, variance: Vec<f64>) -> Result<Self> {
        Self::new(self.lag_range, self.mean.clone(), variance, self.count.clone())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (i, lag) in self.lags().enumerate() {
            let defined = self.count[i] > 0;
            w.serialize(LagRow {
                lag,
                mean: defined.then_some(self.mean[i]),
                variance: defined.then_some(self.variance[i]),
                count: self.count[i],
            })?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let rows: Vec<LagRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
        if rows.is_empty() || rows.len().is_multiple_of(2) {
            return Err(Error::Data(format!("lag profile CSV has {} rows; expected 2L+1", rows.len())));
        }
        let lag_range = rows.len() / 2;
        for (i, row) in rows.iter().enumerate() {
            if row.lag != i as i64 - lag_range as i64 {
                return Err(Error::Data(format!("unexpected lag {} in row {i}", row.lag)));
            }
        }
        Self::new(
            lag_range,
            rows.iter().map(|r| r.mean.unwrap_or(0.0)).collect(),
            rows.iter().map(|r| r.variance.unwrap_or(0.0)).collect(),
            rows.iter().map(|r| r.count).collect(),
        )
    }
}
