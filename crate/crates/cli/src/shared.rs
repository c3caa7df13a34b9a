use std::path::Path;
use std::sync::Arc;

use induction_cmr::cmr::CmrParams;
use induction_cmr::fit::{build_crp_table, build_crp_table_cached, CrpTable, FitGrid};
use induction_cmr::toy::CircuitOptions;

use crate::args::{GridArgs, ToyArgs};
use crate::error::{CliError, CliResult};

/// `beta_enc,beta_rec,gamma_ft,inv_temp`
pub fn parse_params(s: &str) -> CliResult<CmrParams> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::Config(format!("parameters `{s}`: expected beta_enc,beta_rec,gamma_ft,inv_temp"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let v: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|_| bad()))
        .collect::<CliResult<_>>()?;
    CmrParams::new(v[0], v[1], v[2], v[3]).map_err(|e| CliError::Config(format!("parameters `{s}`: {e}")))
}

pub fn params_text(p: &CmrParams) -> String {
    format!("{},{},{},{}", p.beta_enc(), p.beta_rec(), p.gamma_ft(), p.inv_temp())
}

/// Resolve `--grid` to a CRP table with the requested lag range.
pub fn load_table(g: &GridArgs, lag_range: usize) -> CliResult<Arc<CrpTable>> {
    let table = match FitGrid::by_name(&g.grid) {
        Ok(grid) => match &g.table_cache {
            Some(path) => {
                let (table, warn) = build_crp_table_cached(&grid, g.list_len, lag_range, path)?;
                if let Some(w) = warn {
                    eprintln!("warning: table cache not written: {w}");
                }
                table
            }
            None => {
                eprintln!("building CRP table ({} grid points)", grid.len());
                build_crp_table(&grid, g.list_len, lag_range)?
            }
        },
        Err(_) if Path::new(&g.grid).is_file() => CrpTable::load(Path::new(&g.grid))?,
        Err(_) => {
            return Err(CliError::Config(format!(
                "--grid `{}` is neither a named grid (standard, coarse) nor a table file",
                g.grid
            )))
        }
    };
    if table.lag_range() != lag_range {
        return Err(CliError::Config(format!(
            "table covers lags up to {}, but --lag-range is {lag_range}",
            table.lag_range()
        )));
    }
    Ok(Arc::new(table))
}

pub fn circuit_options(t: &ToyArgs, seed: u64) -> CircuitOptions {
    CircuitOptions {
        vocab_size: t.vocab,
        max_len: t.max_len,
        n_heads: t.n_heads,
        gain: t.gain,
        out_gain: t.out_gain,
        seed,
    }
}

pub fn toy_entries(t: &ToyArgs) -> Vec<(&'static str, String)> {
    vec![
        ("vocab", t.vocab.to_string()),
        ("max-len", t.max_len.to_string()),
        ("n-heads", t.n_heads.to_string()),
        ("gain", t.gain.to_string()),
        ("out-gain", t.out_gain.to_string()),
        ("params", t.params.clone()),
    ]
}

pub fn thread_pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))
}
