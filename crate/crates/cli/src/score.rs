use std::path::Path;

use induction_cmr::export::{read_export, Export, HeadData};
use induction_cmr::registry::{basic_head_metrics, circuit_builders, profile_fitters, HeadInput, ProfileFit};
use induction_cmr::toy::{export_toy, toy_prompt};
use induction_cmr::LagProfile;
use rayon::prelude::*;

use crate::args::ScoreArgs;
use crate::error::{CliError, CliResult};
use crate::output::{config_text, num, opt, Outputs};
use crate::shared::{circuit_options, load_table, parse_params, toy_entries};

pub const REPORT_COLUMNS: [&str; 11] = [
    "layer",
    "head",
    "matching_score",
    "copying_score",
    "cmr_distance",
    "gaussian_distance",
    "beta_enc",
    "beta_rec",
    "gamma_ft",
    "inv_temp",
    "is_cmr_like",
];

struct HeadRow {
    layer: usize,
    head: usize,
    matching: Option<f64>,
    copying: Option<f64>,
    profile: LagProfile,
    cmr: ProfileFit,
    gaussian: ProfileFit,
}

fn load_input(a: &ScoreArgs) -> CliResult<Export> {
    if let Some(name) = a.input.strip_prefix("toy:") {
        let params = parse_params(&a.toy.params)?;
        let builder = circuit_builders(params).get(name)?;
        let model = builder.build(&circuit_options(&a.toy, a.common.seed))?;
        let prompt = toy_prompt(a.toy.vocab, a.n_unique, a.common.seed)?;
        return Ok(export_toy(&model, name, &prompt)?);
    }
    let dir = Path::new(&a.input);
    if !dir.is_dir() {
        return Err(CliError::Config(format!("--input {} is not a directory", dir.display())));
    }
    Ok(read_export(dir)?)
}

pub fn run(a: &ScoreArgs, pool: &rayon::ThreadPool) -> CliResult<Outputs> {
    if !(a.threshold > 0.0 && a.threshold.is_finite()) {
        return Err(CliError::Config(format!("--threshold must be positive, got {}", a.threshold)));
    }
    if a.lag_range == 0 {
        return Err(CliError::Config("--lag-range must be at least 1".into()));
    }
    let export = load_input(a)?;
    if export.heads.is_empty() {
        return Err(CliError::Data("export has no heads".into()));
    }
    let n = export.prompt.repeat_length().ok_or_else(|| {
        CliError::Data("prompt is not BOS followed by a repeated permutation".into())
    })?;
    if n <= 2 * a.lag_range {
        return Err(CliError::Config(format!(
            "--lag-range {} needs a repeat length above {}, prompt has {n}",
            a.lag_range,
            2 * a.lag_range
        )));
    }
    let table = pool.install(|| load_table(&a.grid, a.lag_range))?;
    let metrics = basic_head_metrics();
    let matching = metrics.get("matching_score")?;
    let copying = metrics.get("copying_score")?;
    let fitters = profile_fitters(table);
    let cmr = fitters.get("cmr")?;
    let gaussian = fitters.get("gaussian")?;

    let score = |h: &HeadData| -> CliResult<HeadRow> {
        let input = HeadInput {
            head: h,
            prompt: &export.prompt,
            lag_range: a.lag_range,
        };
        let profile = input.profile()?;
        Ok(HeadRow {
            layer: h.layer,
            head: h.head,
            matching: matching.score(&input)?,
            copying: copying.score(&input)?,
            cmr: cmr.fit(&profile)?,
            gaussian: gaussian.fit(&profile)?,
            profile,
        })
    };
    let rows: Vec<HeadRow> = pool.install(|| export.heads.par_iter().map(score).collect::<CliResult<_>>())?;

    let mut out = Outputs::default();
    let report: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let p = r.cmr.params.expect("grid fit returns parameters");
            vec![
                r.layer.to_string(),
                r.head.to_string(),
                opt(r.matching),
                opt(r.copying),
                num(r.cmr.distance),
                num(r.gaussian.distance),
                num(p.beta_enc()),
                num(p.beta_rec()),
                num(p.gamma_ft()),
                num(p.inv_temp()),
                (r.cmr.distance < a.threshold).to_string(),
            ]
        })
        .collect();
    out.add_csv("head_report.csv", &REPORT_COLUMNS, &report)?;

    for r in &rows {
        let mut buf = Vec::new();
        r.profile.write_csv(&mut buf)?;
        out.add(format!("profiles/L{}H{}.csv", r.layer, r.head), buf);
    }

    let mut layers: Vec<usize> = rows.iter().map(|r| r.layer).collect();
    layers.dedup();
    let summary: Vec<Vec<String>> = layers
        .iter()
        .map(|&l| {
            let in_layer: Vec<&HeadRow> = rows.iter().filter(|r| r.layer == l).collect();
            let k = in_layer.iter().filter(|r| r.cmr.distance < a.threshold).count();
            vec![
                l.to_string(),
                in_layer.len().to_string(),
                k.to_string(),
                num(k as f64 / in_layer.len() as f64),
            ]
        })
        .collect();
    out.add_csv(
        "layer_summary.csv",
        &["layer", "n_heads", "n_cmr_like", "frac_cmr_like"],
        &summary,
    )?;

    type Pick = fn(&HeadRow) -> Option<f64>;
    let ranked: [(&str, bool, Pick); 4] = [
        ("matching_score", true, |r| r.matching),
        ("copying_score", true, |r| r.copying),
        ("cmr_distance", false, |r| Some(r.cmr.distance)),
        ("gaussian_distance", false, |r| Some(r.gaussian.distance)),
    ];
    let mut top = Vec::new();
    for (name, descending, pick) in ranked {
        let mut v: Vec<(f64, &HeadRow)> = rows.iter().filter_map(|r| pick(r).map(|x| (x, r))).collect();
        v.sort_by(|a, b| {
            let o = a.0.total_cmp(&b.0);
            if descending {
                o.reverse()
            } else {
                o
            }
        });
        for (rank, (x, r)) in v.iter().take(a.top_k).enumerate() {
            top.push(vec![
                name.to_string(),
                (rank + 1).to_string(),
                r.layer.to_string(),
                r.head.to_string(),
                num(*x),
            ]);
        }
    }
    out.add_csv("top_heads.csv", &["metric", "rank", "layer", "head", "value"], &top)?;

    let mut entries = vec![
        ("input", a.input.clone()),
        ("lag-range", a.lag_range.to_string()),
        ("threshold", a.threshold.to_string()),
        ("top-k", a.top_k.to_string()),
        ("grid", a.grid.grid.clone()),
        ("list-len", a.grid.list_len.to_string()),
        ("seed", a.common.seed.to_string()),
    ];
    if a.input.starts_with("toy:") {
        entries.push(("n-unique", a.n_unique.to_string()));
        entries.extend(toy_entries(&a.toy));
    }
    out.add("config.txt", config_text("score-heads", &entries));
    Ok(out)
}
