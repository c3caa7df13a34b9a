use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameter values enumerated by the CMR fit. The table is the Cartesian
/// product in the order `beta_enc, beta_rec, gamma_ft, inv_temp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitGrid {
    pub beta_enc: Vec<f64>,
    pub beta_rec: Vec<f64>,
    pub gamma_ft: Vec<f64>,
    pub inv_temp: Vec<f64>,
}

fn steps(from: u32, to: u32, denom: f64) -> Vec<f64> {
    (from..=to).map(|k| k as f64 / denom).collect()
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect()
}

impl FitGrid {
    /// beta_enc 0.05..1 and beta_rec 0..1 in steps of 0.05, gamma_ft 0..1 in
    /// steps of 0.1, and 25 log-spaced inverse temperatures from 0.1 to 100.
    pub fn standard() -> Self {
        Self {
            beta_enc: steps(1, 20, 20.0),
            beta_rec: steps(0, 20, 20.0),
            gamma_ft: steps(0, 10, 10.0),
            inv_temp: log_space(0.1, 100.0, 25),
        }
    }

    /// A small grid for quick runs and tests.
    pub fn coarse() -> Self {
        Self {
            beta_enc: steps(1, 5, 5.0),
            beta_rec: steps(0, 5, 5.0),
            gamma_ft: steps(0, 4, 4.0),
            inv_temp: log_space(0.1, 100.0, 7),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "standard" | "full" => Ok(Self::standard()),
            "coarse" => Ok(Self::coarse()),
            other => Err(Error::Unknown {
                kind: "grid",
                name: other.to_string(),
                available: "standard, coarse".into(),
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let axes: [(&str, &[f64], f64, f64, bool); 4] = [
            ("beta_enc", &self.beta_enc, 0.0, 1.0, false),
            ("beta_rec", &self.beta_rec, 0.0, 1.0, true),
            ("gamma_ft", &self.gamma_ft, 0.0, 1.0, true),
            ("inv_temp", &self.inv_temp, 0.0, f64::MAX, true),
        ];
        for (name, values, lo, hi, lo_inclusive) in axes {
            if values.is_empty() {
                return Err(Error::InvalidParameter(format!("grid axis {name} is empty")));
            }
            if values.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidParameter(format!("grid axis {name} is not strictly ascending")));
            }
            let bad_lo = |v: f64| if lo_inclusive { v < lo } else { v <= lo };
            if values.iter().any(|&v| !v.is_finite() || bad_lo(v) || v > hi) {
                return Err(Error::InvalidParameter(format!("grid axis {name} leaves its range")));
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> [usize; 4] {
        [
            self.beta_enc.len(),
            self.beta_rec.len(),
            self.gamma_ft.len(),
            self.inv_temp.len(),
        ]
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_grid_shape() {
        let g = FitGrid::standard();
        assert_eq!(g.shape(), [20, 21, 11, 25]);
        g.validate().unwrap();
        assert_eq!(g.beta_enc[0], 0.05);
        assert_eq!(*g.beta_enc.last().unwrap(), 1.0);
        assert_eq!(g.gamma_ft[3], 0.3);
        assert!((g.inv_temp[0] - 0.1).abs() < 1e-15);
        assert!((g.inv_temp[24] - 100.0).abs() < 1e-12);
        assert!((g.inv_temp[1] - 10f64.powf(-0.875)).abs() < 1e-12);
    }

    #[test]
    fn validation_catches_bad_axes() {
        let mut g = FitGrid::coarse();
        g.validate().unwrap();
        g.beta_enc.insert(0, 0.0);
        assert!(g.validate().is_err());
        let mut g = FitGrid::coarse();
        g.gamma_ft.reverse();
        assert!(g.validate().is_err());
        let mut g = FitGrid::coarse();
        g.inv_temp.clear();
        assert!(g.validate().is_err());
    }
}
