use induction_cmr::registry::{basic_head_metrics, circuit_builders, head_metrics, HeadInput};
use induction_cmr::toy::{
    export_toy, repeated_sequences, run_ablation, toy_prompt, AblationMode, AblationSpec, HeadId, IclReport,
};

use crate::args::AblateArgs;
use crate::error::{CliError, CliResult};
use crate::output::{config_text, num, Outputs};
use crate::shared::{circuit_options, load_table, parse_params, toy_entries};

fn heads_text(heads: &[HeadId]) -> String {
    heads.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn run(a: &AblateArgs, pool: &rayon::ThreadPool) -> CliResult<Outputs> {
    let mode = AblationMode::parse(&a.ablation_mode)?;
    let params = parse_params(&a.toy.params)?;
    if 2 * a.n_unique > a.toy.max_len || a.late >= 2 * a.n_unique {
        return Err(CliError::Config(format!(
            "sequences of 2 x {} tokens must fit --max-len {} and extend past --late {}",
            a.n_unique, a.toy.max_len, a.late
        )));
    }
    let builders = circuit_builders(params);
    let metrics = if a.rank_by == "cmr_distance" {
        head_metrics(pool.install(|| load_table(&a.grid, a.lag_range))?)
    } else {
        basic_head_metrics()
    };
    let metric = metrics.get(&a.rank_by)?;
    let model = builders.get(&a.circuit)?.build(&circuit_options(&a.toy, a.common.seed))?;

    // Rank heads on the designed prompt; heads the metric cannot score go last.
    let prompt = toy_prompt(a.toy.vocab, a.rank_unique, a.common.seed)?;
    let export = export_toy(&model, &a.circuit, &prompt)?;
    let mut ranked: Vec<(Option<f64>, HeadId)> = export
        .heads
        .iter()
        .map(|h| {
            let input = HeadInput {
                head: h,
                prompt: &prompt,
                lag_range: a.lag_range,
            };
            Ok((metric.score(&input)?, HeadId::new(h.layer, h.head)))
        })
        .collect::<CliResult<_>>()?;
    let strong = metric.higher_is_stronger();
    ranked.sort_by(|x, y| match (x.0, y.0) {
        (Some(p), Some(q)) if strong => q.total_cmp(&p),
        (Some(p), Some(q)) => p.total_cmp(&q),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    let ranking: Vec<HeadId> = ranked.iter().map(|r| r.1).collect();

    let seqs = repeated_sequences(a.n_seq, a.n_unique, a.toy.vocab, a.common.seed)?;
    let spec = AblationSpec {
        frac: a.ablate_frac,
        mode,
        early: a.early,
        late: a.late,
        seed: a.common.seed,
    };
    let r = pool.install(|| run_ablation(&model, &ranking, &seqs, &spec))?;

    let mut out = Outputs::default();
    let arm = |name: &str, rep: &IclReport, heads: String| {
        vec![
            name.to_string(),
            num(rep.icl_score),
            num(rep.sem),
            rep.loss_early.len().to_string(),
            rep.n_skipped.to_string(),
            mode.as_str().to_string(),
            heads,
        ]
    };
    out.add_csv(
        "ablation_summary.csv",
        &["arm", "icl_score", "sem", "n_sequences", "n_skipped", "ablation_mode", "heads"],
        &[
            arm("intact", &r.intact, String::new()),
            arm("random", &r.random, "per-sequence draw".into()),
            arm("targeted", &r.targeted, heads_text(&r.targeted_heads)),
        ],
    )?;
    let tests = [
        ("random_vs_intact", &r.intact_vs_random),
        ("targeted_vs_random", &r.random_vs_targeted),
        ("targeted_vs_intact", &r.intact_vs_targeted),
    ];
    let rows: Vec<Vec<String>> = tests
        .iter()
        .map(|(name, t)| {
            vec![
                name.to_string(),
                t.n_greater.to_string(),
                t.n_less.to_string(),
                t.n_ties.to_string(),
                num(t.p_value),
            ]
        })
        .collect();
    out.add_csv("sign_tests.csv", &["comparison", "n_greater", "n_less", "n_ties", "p_value"], &rows)?;

    let (di, dr, dt) = (r.intact.deltas(), r.random.deltas(), r.targeted.deltas());
    let rows: Vec<Vec<String>> = (0..di.len())
        .map(|i| {
            vec![
                i.to_string(),
                num(di[i]),
                num(dr[i]),
                num(dt[i]),
                heads_text(&r.random_heads[i]),
            ]
        })
        .collect();
    out.add_csv(
        "per_sequence.csv",
        &["sequence", "intact", "random", "targeted", "random_heads"],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = ranked
        .iter()
        .enumerate()
        .map(|(i, (s, h))| {
            vec![
                (i + 1).to_string(),
                h.layer.to_string(),
                h.head.to_string(),
                s.map(num).unwrap_or_default(),
                r.targeted_heads.contains(h).to_string(),
            ]
        })
        .collect();
    out.add_csv("head_ranking.csv", &["rank", "layer", "head", a.rank_by.as_str(), "targeted"], &rows)?;

    let mut entries = vec![
        ("circuit", a.circuit.clone()),
        ("ablate-frac", a.ablate_frac.to_string()),
        ("ablation-mode", mode.as_str().to_string()),
        ("rank-by", a.rank_by.clone()),
        ("n-seq", a.n_seq.to_string()),
        ("n-unique", a.n_unique.to_string()),
        ("rank-unique", a.rank_unique.to_string()),
        ("early", a.early.to_string()),
        ("late", a.late.to_string()),
        ("lag-range", a.lag_range.to_string()),
        ("seed", a.common.seed.to_string()),
    ];
    entries.extend(toy_entries(&a.toy));
    out.add("config.txt", config_text("ablate", &entries));
    Ok(out)
}
