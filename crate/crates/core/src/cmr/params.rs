use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four free parameters of the memory model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmrParams {
    beta_enc: f64,
    beta_rec: f64,
    gamma_ft: f64,
    inv_temp: f64,
}

impl CmrParams {
    /// Validates ranges: `beta_enc` in (0, 1], `beta_rec` and `gamma_ft` in
    /// [0, 1], `inv_temp` finite and non-negative.
    pub fn new(beta_enc: f64, beta_rec: f64, gamma_ft: f64, inv_temp: f64) -> Result<Self> {
        let check = |name: &str, v: f64, ok: bool| {
            if v.is_finite() && ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} = {v} is out of range")))
            }
        };
        check("beta_enc", beta_enc, beta_enc > 0.0 && beta_enc <= 1.0)?;
        check("beta_rec", beta_rec, (0.0..=1.0).contains(&beta_rec))?;
        check("gamma_ft", gamma_ft, (0.0..=1.0).contains(&gamma_ft))?;
        check("inv_temp", inv_temp, inv_temp >= 0.0)?;
        Ok(Self {
            beta_enc,
            beta_rec,
            gamma_ft,
            inv_temp,
        })
    }

    pub fn beta_enc(&self) -> f64 {
        self.beta_enc
    }

    pub fn beta_rec(&self) -> f64 {
        self.beta_rec
    }

    pub fn gamma_ft(&self) -> f64 {
        self.gamma_ft
    }

    pub fn inv_temp(&self) -> f64 {
        self.inv_temp
    }

    /// Carry-over coefficient for a drift step orthogonal to the current
    /// context, `sqrt(1 - beta^2)`.
    pub fn rho_orthogonal(beta: f64) -> f64 {
        (1.0 - beta * beta).max(0.0).sqrt()
    }

    pub fn with_inv_temp(self, inv_temp: f64) -> Result<Self> {
        Self::new(self.beta_enc, self.beta_rec, self.gamma_ft, inv_temp)
    }
}
