use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "induction-cmr", version, about = "Memory-model analysis of attention heads")]
pub struct Cli {
    /// Flat `key = value` file of default flags; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Score every head of an export (or a toy model) and fit lag-CRPs.
    ScoreHeads(ScoreArgs),
    /// Analytic and Monte-Carlo CRP curves for memory-model parameter sets.
    Simulate(SimulateArgs),
    /// ICL scores of a toy model: intact, top-ranked heads ablated, random heads ablated.
    Ablate(AblateArgs),
    /// Build a toy circuit and write it in the export format.
    ExportToy(ExportToyArgs),
    /// Precompute a CRP table for a fit grid.
    BuildTable(BuildTableArgs),
    /// List registered metrics, fitters and circuits.
    List,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// `standard`, `coarse`, or a table file written by `build-table`.
    #[arg(long, default_value = "standard")]
    pub grid: String,
    /// List length the CRP table is computed for.
    #[arg(long, default_value_t = 100)]
    pub list_len: usize,
    /// Cache file for a named grid's table (built on first use).
    #[arg(long, value_name = "FILE")]
    pub table_cache: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ToyArgs {
    #[arg(long, default_value_t = 64)]
    pub vocab: usize,
    #[arg(long, default_value_t = 128)]
    pub max_len: usize,
    #[arg(long, default_value_t = 1)]
    pub n_heads: usize,
    #[arg(long, default_value_t = 30.0)]
    pub gain: f64,
    #[arg(long, default_value_t = 10.0)]
    pub out_gain: f64,
    /// Memory-model parameters `beta_enc,beta_rec,gamma_ft,inv_temp` for the `cmr` circuit.
    #[arg(long, default_value = "0.7,0.7,0,5")]
    pub params: String,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Export directory, or `toy:<circuit>` to score a freshly built toy model.
    #[arg(long)]
    pub input: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub lag_range: usize,
    /// Heads with CMR distance below this are flagged CMR-like.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Rows per metric in top_heads.csv.
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    /// Distinct tokens in the designed prompt of a toy input.
    #[arg(long, default_value_t = 50)]
    pub n_unique: usize,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub toy: ToyArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// `beta_enc,beta_rec,gamma_ft,inv_temp`; repeat for a sweep.
    #[arg(long, required = true)]
    pub params: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub list_len: usize,
    #[arg(long, default_value_t = 5)]
    pub lag_range: usize,
    /// Monte-Carlo transitions per parameter set; 0 skips the simulation.
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long, default_value = "induction-ensemble")]
    pub circuit: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub ablate_frac: f64,
    #[arg(long, default_value = "zero")]
    pub ablation_mode: String,
    /// Head metric used to pick the targeted heads.
    #[arg(long, default_value = "matching_score")]
    pub rank_by: String,
    #[arg(long, default_value_t = 100)]
    pub n_seq: usize,
    /// Distinct tokens per repeated sequence.
    #[arg(long, default_value_t = 64)]
    pub n_unique: usize,
    /// Distinct tokens in the prompt used to rank heads.
    #[arg(long, default_value_t = 50)]
    pub rank_unique: usize,
    #[arg(long, default_value_t = 20)]
    pub early: usize,
    #[arg(long, default_value_t = 100)]
    pub late: usize,
    #[arg(long, default_value_t = 5)]
    pub lag_range: usize,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub toy: ToyArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ExportToyArgs {
    #[arg(long)]
    pub circuit: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub n_unique: usize,
    #[command(flatten)]
    pub toy: ToyArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct BuildTableArgs {
    #[arg(long, default_value = "standard")]
    pub grid: String,
    #[arg(long, default_value_t = 100)]
    pub list_len: usize,
    #[arg(long, default_value_t = 5)]
    pub lag_range: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

const SUBCOMMANDS: [&str; 6] = ["score-heads", "simulate", "ablate", "export-toy", "build-table", "list"];

/// Parse a config file into `--key value` pairs. Blank lines and `#`
/// comments are skipped; underscores in keys become dashes.
pub fn parse_config(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(CliError::Config(format!("config line {}: invalid key `{}`", i + 1, k.trim())));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn flag_name(arg: &str) -> Option<&str> {
    let rest = arg.strip_prefix("--")?;
    Some(rest.split_once('=').map_or(rest, |(k, _)| k))
}

/// Splice the settings of `--config FILE` into the argument list just after
/// the subcommand, dropping any key that is also given as a flag.
pub fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        match a.to_str() {
            Some("--config") => {
                let path = it
                    .next()
                    .ok_or_else(|| CliError::Config("--config needs a file".into()))?;
                config = Some(PathBuf::from(path));
            }
            Some(s) if s.starts_with("--config=") => config = Some(PathBuf::from(&s["--config=".len()..])),
            _ => rest.push(a),
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let given: Vec<String> = rest
        .iter()
        .filter_map(|a| a.to_str().and_then(flag_name).map(str::to_string))
        .collect();
    let Some(pos) = rest
        .iter()
        .position(|a| a.to_str().is_some_and(|s| SUBCOMMANDS.contains(&s)))
    else {
        return Ok(rest);
    };
    let inserted: Vec<OsString> = parse_config(&text)?
        .into_iter()
        .filter(|(k, _)| !given.contains(k))
        .flat_map(|(k, v)| [OsString::from(format!("--{k}")), OsString::from(v)])
        .collect();
    rest.splice(pos + 1..pos + 1, inserted);
    Ok(rest)
}
