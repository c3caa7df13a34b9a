use serde::Serialize;

use super::{objective_weights, weighted_sse};
use crate::error::Result;
use crate::lag::LagProfile;

const C2_STARTS: [f64; 4] = [-2.0, 0.0, 2.0, 4.0];
const C3_STARTS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
const MIN_WIDTH: f64 = 1e-3;
const STEP_TOL: f64 = 1e-9;
const MAX_EVALS: usize = 200_000;

/// Best Gaussian-bump fit `c1 exp(-(lag - c2)^2 / (2 c3^2)) + c4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianFit {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub distance: f64,
    /// False when no start reached the step tolerance within the evaluation
    /// budget; the best point found is still returned.
    pub converged: bool,
}

pub fn gaussian_curve(lag_range: usize, c1: f64, c2: f64, c3: f64, c4: f64) -> Vec<f64> {
    let l = lag_range as i64;
    (-l..=l)
        .map(|lag| {
            let d = lag as f64 - c2;
            c1 * (-d * d / (2.0 * c3 * c3)).exp() + c4
        })
        .collect()
}

/// Weighted least squares for `(c1, c4)` given the bump shape `b`.
fn linear_coeffs(w: &[f64], a: &[f64], b: &[f64]) -> (f64, f64) {
    let (mut sw, mut sb, mut sbb, mut sa, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((w, a), b) in w.iter().zip(a).zip(b) {
        sw += w;
        sb += w * b;
        sbb += w * b * b;
        sa += w * a;
        sab += w * a * b;
    }
    let det = sw * sbb - sb * sb;
    if det.abs() <= 1e-14 * (sw * sbb).max(f64::MIN_POSITIVE) {
        return (0.0, sa / sw);
    }
    ((sw * sab - sb * sa) / det, (sbb * sa - sb * sab) / det)
}

struct Problem<'a> {
    lag_range: usize,
    w: &'a [f64],
    a: &'a [f64],
}

impl Problem<'_> {
    fn eval(&self, c2: f64, c3: f64) -> (f64, f64, f64) {
        let bump = gaussian_curve(self.lag_range, 1.0, c2, c3, 0.0);
        let (c1, c4) = linear_coeffs(self.w, self.a, &bump);
        let curve: Vec<f64> = bump.iter().map(|b| c1 * b + c4).collect();
        (weighted_sse(self.w, self.a, &curve), c1, c4)
    }
}

/// Pattern search over `(c2, c3)` from one start.
fn refine(p: &Problem, c2: f64, c3: f64) -> (GaussianFit, usize) {
    const DIRS: [(f64, f64); 8] = [
        (1.0, 0.0),
        (-1.0, 0.0),
        (0.0, 1.0),
        (0.0, -1.0),
        (1.0, 1.0),
        (1.0, -1.0),
        (-1.0, 1.0),
        (-1.0, -1.0),
    ];
    let (mut c2, mut c3) = (c2, c3);
    let (mut best, mut c1, mut c4) = p.eval(c2, c3);
    let mut step = 0.5;
    let mut evals = 1;
    while step > STEP_TOL && evals < MAX_EVALS {
        let mut moved = false;
        for (d2, d3) in DIRS {
            let n2 = c2 + d2 * step;
            let n3 = (c3 + d3 * step).max(MIN_WIDTH);
            let (v, n1, n4) = p.eval(n2, n3);
            evals += 1;
            if v < best {
                (best, c1, c2, c3, c4) = (v, n1, n2, n3, n4);
                moved = true;
                break;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    let fit = GaussianFit {
        c1,
        c2,
        c3,
        c4,
        distance: best.max(0.0),
        converged: step <= STEP_TOL,
    };
    (fit, evals)
}

/// Multi-start fit of the Gaussian baseline under the CMR fit objective.
pub fn fit_gaussian(profile: &LagProfile) -> Result<GaussianFit> {
    let w = objective_weights(profile)?;
    let p = Problem {
        lag_range: profile.lag_range(),
        w: &w,
        a: profile.means(),
    };
    let mut best: Option<GaussianFit> = None;
    let mut any_converged = false;
    for c2 in C2_STARTS {
        for c3 in C3_STARTS {
            let (fit, _) = refine(&p, c2, c3);
            any_converged |= fit.converged;
            if best.is_none_or(|b| fit.distance < b.distance) {
                best = Some(fit);
            }
        }
    }
    let mut fit = best.expect("at least one start");
    fit.converged = any_converged;
    Ok(fit)
}
