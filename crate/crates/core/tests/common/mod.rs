//! Brute-force reference implementations used as test oracles. Each one is
//! written from the definitions with plain loops and shares no code with the
//! library routine it checks.
#![allow(dead_code)]

use induction_cmr::cmr::CmrParams;
use induction_cmr::fit::{build_crp_table_cached, CrpTable, FitGrid};
use nalgebra::DMatrix;
use rand::Rng;

/// Attention mass on cells `(d, s)` with `s < d` and `x[s-1] == x[d]`,
/// divided by the total mass of rows that contain such a cell.
pub fn oracle_matching(pattern: &DMatrix<f64>, tokens: &[u32]) -> f64 {
    let t = tokens.len();
    let mut on = 0.0;
    let mut all = 0.0;
    for d in 0..t {
        let mut has_target = false;
        let mut row_on = 0.0;
        let mut row_all = 0.0;
        for s in 0..=d {
            let a = pattern[(d, s)];
            row_all += a;
            if s >= 1 && s < d && tokens[s - 1] == tokens[d] {
                has_target = true;
                row_on += a;
            }
        }
        if has_target {
            on += row_on;
            all += row_all;
        }
    }
    on / all
}

/// `(mean, population variance, count)` of `scores[s+n, s+lag]` for
/// `|lag| < s <= n - |lag|`.
pub fn oracle_attention_crp(scores: &DMatrix<f64>, n: usize, lag: i64) -> (f64, f64, usize) {
    let mut xs = Vec::new();
    for s in 1..=n as i64 {
        if s > lag.abs() && s <= n as i64 - lag.abs() {
            let d = (s + n as i64) as usize;
            let src = (s + lag) as usize;
            xs.push(if src <= d { scores[(d, src)] } else { 0.0 });
        }
    }
    let k = xs.len() as f64;
    let mut m = 0.0;
    for x in &xs {
        m += x;
    }
    m /= k;
    let mut v = 0.0;
    for x in &xs {
        v += (x - m) * (x - m);
    }
    (m, v / k, xs.len())
}

/// `sum over defined lags of (q - mean)^2 / floored_var / n_defined`.
pub fn oracle_objective(mean: &[f64], var: &[f64], count: &[u64], q: &[f64]) -> f64 {
    let mut defined = 0.0;
    for &c in count {
        if c > 0 {
            defined += 1.0;
        }
    }
    let mut total = 0.0;
    for i in 0..mean.len() {
        if count[i] == 0 {
            continue;
        }
        let floor = if mean[i] * mean[i] > 1.0 { 1e-8 * mean[i] * mean[i] } else { 1e-8 };
        let v = if var[i] > floor { var[i] } else { floor };
        total += (q[i] - mean[i]).powi(2) / v / defined;
    }
    total
}

/// Recall distribution from dense matrices: rebuild `M_TF` by explicit outer
/// products and apply a softmax over `n` items.
pub fn oracle_recall_distribution(contexts: &[Vec<f64>], cue: &[f64], inv_temp: f64) -> Vec<f64> {
    let n = contexts.len() - 1;
    let mut strengths = vec![0.0; n];
    for (j, s) in strengths.iter_mut().enumerate() {
        for (a, c) in contexts[j].iter().enumerate() {
            *s += c * cue[a];
        }
    }
    let max = strengths.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = strengths.iter().map(|s| ((s - max) * inv_temp).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

pub fn random_pattern(rng: &mut impl Rng, t: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(t, t);
    for d in 0..t {
        let mut z = 0.0;
        for s in 0..=d {
            let v: f64 = rng.gen::<f64>().powi(3);
            m[(d, s)] = v;
            z += v;
        }
        for s in 0..=d {
            m[(d, s)] /= z;
        }
    }
    m
}

pub fn random_grid_params(rng: &mut impl Rng, grid: &FitGrid) -> CmrParams {
    let pick = |rng: &mut dyn rand::RngCore, axis: &[f64]| axis[rng.gen_range(0..axis.len())];
    CmrParams::new(
        pick(rng, &grid.beta_enc),
        pick(rng, &grid.beta_rec),
        pick(rng, &grid.gamma_ft),
        pick(rng, &grid.inv_temp),
    )
    .unwrap()
}

/// Standard-grid table for `L = 5` on 100-item lists, cached under the
/// cargo target directory so repeated test runs skip the build.
pub fn standard_table() -> CrpTable {
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("crp_table_standard_100_5.bin");
    let (table, err) = build_crp_table_cached(&FitGrid::standard(), 100, 5, &path).unwrap();
    if let Some(e) = err {
        eprintln!("warning: could not cache CRP table: {e}");
    }
    table
}
