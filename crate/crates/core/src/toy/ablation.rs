use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::icl::{icl_score, IclReport};
use super::model::{AblationFill, AblationMode, HeadId, ToyModel};
use crate::error::{Error, Result};
use crate::metrics::TokenSequence;
use crate::stats::{sign_test, SignTest};

/// Mixed into the seed of the random-arm head draws so they are independent
/// of the sequence draws made from the same user seed.
const RANDOM_ARM_SALT: u64 = 0x5eed_ab1a;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AblationSpec {
    pub frac: f64,
    pub mode: AblationMode,
    pub early: usize,
    pub late: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub mode: AblationMode,
    pub targeted_heads: Vec<HeadId>,
    /// Heads ablated in the random arm, per sequence.
    pub random_heads: Vec<Vec<HeadId>>,
    pub intact: IclReport,
    pub targeted: IclReport,
    pub random: IclReport,
    pub intact_vs_random: SignTest,
    pub random_vs_targeted: SignTest,
    pub intact_vs_targeted: SignTest,
}

/// `ceil(frac * n_heads)`, which must leave at least as many heads for the
/// random arm.
pub fn n_ablated(frac: f64, n_heads: usize) -> Result<usize> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::InvalidParameter(format!("ablation fraction {frac} outside (0, 1]")));
    }
    let k = (frac * n_heads as f64).ceil() as usize;
    if 2 * k > n_heads {
        return Err(Error::InvalidParameter(format!(
            "ablating {k} of {n_heads} heads leaves too few heads for a random arm of the same size"
        )));
    }
    Ok(k)
}

/// Compare ICL scores of the intact model, the model with the top-ranked
/// heads ablated, and the model with as many randomly drawn other heads
/// ablated (a fresh draw per sequence).
///
/// `ranking` lists head ids, most strongly targeted first.
pub fn run_ablation(
    model: &ToyModel,
    ranking: &[HeadId],
    seqs: &[TokenSequence],
    spec: &AblationSpec,
) -> Result<AblationReport> {
    let all = model.head_ids();
    let k = n_ablated(spec.frac, all.len())?;
    if ranking.len() < k {
        return Err(Error::InvalidParameter(format!(
            "ranking lists {} heads, {k} needed",
            ranking.len()
        )));
    }
    let usable: Vec<TokenSequence> = seqs.iter().filter(|s| s.len() > spec.late).cloned().collect();
    let n_skipped = seqs.len() - usable.len();
    let seqs = usable.as_slice();
    let targeted_heads = ranking[..k].to_vec();
    let others: Vec<HeadId> = all.iter().copied().filter(|h| !targeted_heads.contains(h)).collect();

    let means = match spec.mode {
        AblationMode::Zero => None,
        AblationMode::Mean => Some(model.mean_head_outputs(seqs)?),
    };
    let ablated = |heads: &[HeadId]| {
        model.ablate_with(heads.iter().map(|id| {
            let fill = match &means {
                None => AblationFill::Zero,
                Some(m) => AblationFill::Mean(m[id].clone()),
            };
            (*id, fill)
        }))
    };

    let mut intact = icl_score(model, seqs, spec.early, spec.late)?;
    intact.n_skipped = n_skipped;
    let targeted_model = ablated(&targeted_heads)?;
    let mut targeted = icl_score(&targeted_model, seqs, spec.early, spec.late)?;
    targeted.n_skipped = n_skipped;

    let mut random_heads = Vec::with_capacity(seqs.len());
    let mut random_parts = Vec::with_capacity(seqs.len());
    for (i, seq) in seqs.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ RANDOM_ARM_SALT);
        rng.set_stream(i as u64);
        let mut pick: Vec<HeadId> = others.choose_multiple(&mut rng, k).copied().collect();
        pick.sort();
        let m = ablated(&pick)?;
        random_parts.push(icl_score(&m, std::slice::from_ref(seq), spec.early, spec.late)?);
        random_heads.push(pick);
    }
    let loss_early: Vec<f64> = random_parts.iter().map(|r| r.loss_early[0]).collect();
    let loss_late: Vec<f64> = random_parts.iter().map(|r| r.loss_late[0]).collect();
    let deltas: Vec<f64> = loss_late.iter().zip(&loss_early).map(|(l, e)| l - e).collect();
    let random = IclReport {
        early: spec.early,
        late: spec.late,
        icl_score: deltas.iter().sum::<f64>() / deltas.len() as f64,
        sem: crate::stats::sem(&deltas),
        loss_early,
        loss_late,
        n_skipped,
    };
    let (di, dr, dt) = (intact.deltas(), random.deltas(), targeted.deltas());
    Ok(AblationReport {
        mode: spec.mode,
        targeted_heads,
        random_heads,
        intact_vs_random: sign_test(&di, &dr),
        random_vs_targeted: sign_test(&dr, &dt),
        intact_vs_targeted: sign_test(&di, &dt),
        intact,
        targeted,
        random,
    })
}
