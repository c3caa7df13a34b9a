mod ablate;
mod args;
mod error;
mod output;
mod score;
mod shared;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use induction_cmr::export::write_export;
use induction_cmr::fit::{build_crp_table, FitGrid};
use induction_cmr::cmr::CmrParams;
use induction_cmr::registry::{basic_head_metrics, circuit_builders};
use induction_cmr::toy::{export_toy, toy_prompt};

use args::{BuildTableArgs, Cli, Command, ExportToyArgs};
use error::{CliResult, EXIT_CONFIG};
use shared::{circuit_options, parse_params, thread_pool};

fn export_toy_cmd(a: &ExportToyArgs) -> CliResult<Vec<PathBuf>> {
    let params = parse_params(&a.toy.params)?;
    let model = circuit_builders(params)
        .get(&a.circuit)?
        .build(&circuit_options(&a.toy, a.common.seed))?;
    let prompt = toy_prompt(a.toy.vocab, a.n_unique, a.common.seed)?;
    let export = export_toy(&model, &a.circuit, &prompt)?;
    write_export(&a.out, &export)?;
    Ok(vec![a.out.clone()])
}

fn build_table_cmd(a: &BuildTableArgs, pool: &rayon::ThreadPool) -> CliResult<Vec<PathBuf>> {
    let grid = FitGrid::by_name(&a.grid)?;
    eprintln!("building CRP table ({} grid points)", grid.len());
    let table = pool.install(|| build_crp_table(&grid, a.list_len, a.lag_range))?;
    table.save(&a.out)?;
    Ok(vec![a.out.clone()])
}

fn list() {
    println!("head metrics:");
    for (name, _) in basic_head_metrics().iter() {
        println!("  {name}");
    }
    println!("  cmr_distance (uses --grid)");
    println!("profile fitters:\n  cmr\n  gaussian");
    println!("circuits:");
    let p = CmrParams::new(0.7, 0.7, 0.0, 5.0).expect("valid defaults");
    for (name, b) in circuit_builders(p).iter() {
        println!("  {name:<20} {}", b.description());
    }
}

fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    let workers = match &cli.command {
        Command::ScoreHeads(a) => a.common.workers,
        Command::Simulate(a) => a.common.workers,
        Command::Ablate(a) => a.common.workers,
        Command::ExportToy(a) => a.common.workers,
        Command::BuildTable(a) => a.common.workers,
        Command::List => 0,
    };
    let pool = thread_pool(workers)?;
    match &cli.command {
        Command::ScoreHeads(a) => score::run(a, &pool)?.commit(&a.out),
        Command::Simulate(a) => simulate::run(a, &pool)?.commit(&a.out),
        Command::Ablate(a) => ablate::run(a, &pool)?.commit(&a.out),
        Command::ExportToy(a) => export_toy_cmd(a),
        Command::BuildTable(a) => build_table_cmd(a, &pool),
        Command::List => {
            list();
            Ok(vec![])
        }
    }
}

fn main() -> ExitCode {
    let argv = match args::expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
