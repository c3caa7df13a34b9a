use nalgebra::DVector;

use crate::error::{Error, Result};

const UNIT_TOL: f64 = 1e-9;

/// One-hot item vector of dimension `n_items + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ItemEmbedding {
    index: usize,
    n_items: usize,
}

impl ItemEmbedding {
    pub fn new(index: usize, n_items: usize) -> Result<Self> {
        if index >= n_items {
            return Err(Error::InvalidParameter(format!(
                "item index {index} out of range for {n_items} items (index {n_items} is the dummy unit)"
            )));
        }
        Ok(Self { index, n_items })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn dim(&self) -> usize {
        self.n_items + 1
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        v[self.index] = 1.0;
        v
    }
}

/// Unit-norm temporal context vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalContext(DVector<f64>);

impl TemporalContext {
    /// Context concentrated on the dummy unit, the state before the first item.
    pub fn initial(n_items: usize) -> Self {
        let mut v = DVector::zeros(n_items + 1);
        v[n_items] = 1.0;
        Self(v)
    }

    /// Wraps `v`, which must already have unit norm.
    pub fn from_unit(v: DVector<f64>) -> Result<Self> {
        check_unit("context", &v)?;
        Ok(Self(v))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

fn check_unit(what: &str, v: &DVector<f64>) -> Result<()> {
    let n = v.norm();
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::Precondition(format!("{what} has norm {n}, expected 1")));
    }
    Ok(())
}

/// Carry-over weight `rho >= 0` such that `|rho * t_prev + beta * t_in| = 1`.
///
/// With `c = <t_prev, t_in>` the root is `sqrt(1 + beta^2 (c^2 - 1)) - beta c`.
pub fn compute_rho(t_prev: &TemporalContext, t_in_unit: &DVector<f64>, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Precondition(format!("beta = {beta} outside [0, 1]")));
    }
    if t_prev.dim() != t_in_unit.len() {
        return Err(Error::Dimension {
            expected: t_prev.dim(),
            got: t_in_unit.len(),
        });
    }
    check_unit("input context", t_in_unit)?;
    let c = t_prev.as_vector().dot(t_in_unit);
    let disc = 1.0 + beta * beta * (c * c - 1.0);
    if disc < 0.0 {
        // |c| <= 1 for unit vectors, so this only happens through rounding far
        // beyond the unit tolerance.
        return Err(Error::Numerical(format!("negative discriminant {disc} in rho")));
    }
    Ok(disc.sqrt() - beta * c)
}

/// One drift step: normalise `t_in`, then `t = rho * t_prev + beta * t_in`.
pub fn update_context(t_prev: &TemporalContext, t_in: &DVector<f64>, beta: f64) -> Result<TemporalContext> {
    let norm = t_in.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Degenerate("input context has zero or non-finite norm".into()));
    }
    let unit = t_in / norm;
    let rho = compute_rho(t_prev, &unit, beta)?;
    Ok(TemporalContext(t_prev.as_vector() * rho + unit * beta))
}
