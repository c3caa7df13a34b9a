use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::model::ToyModel;
use crate::error::{Error, Result};
use crate::metrics::TokenSequence;
use crate::stats::sem;

pub const DEFAULT_EARLY: usize = 20;
pub const DEFAULT_LATE: usize = 100;

/// Per-sequence token losses at two context positions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IclReport {
    pub early: usize,
    pub late: usize,
    pub loss_early: Vec<f64>,
    pub loss_late: Vec<f64>,
    /// Mean of `loss_late - loss_early`.
    pub icl_score: f64,
    pub sem: f64,
    /// Sequences too short for `late`, left out of every vector above.
    pub n_skipped: usize,
}

impl IclReport {
    pub fn deltas(&self) -> Vec<f64> {
        self.loss_late.iter().zip(&self.loss_early).map(|(l, e)| l - e).collect()
    }
}

/// Cross-entropy of predicting `seq[index]` from the logits at `index - 1`.
pub fn token_loss(logits: &DMatrix<f64>, seq: &TokenSequence, index: usize) -> f64 {
    let row = logits.row(index - 1);
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    lse - row[seq.tokens()[index] as usize]
}

/// In-context-learning score: mean over sequences of the loss at `late`
/// minus the loss at `early`. Negative when later tokens are easier.
pub fn icl_score(model: &ToyModel, seqs: &[TokenSequence], early: usize, late: usize) -> Result<IclReport> {
    if early == 0 || early >= late {
        return Err(Error::InvalidParameter(format!(
            "need 0 < early < late, got early {early}, late {late}"
        )));
    }
    let usable: Vec<&TokenSequence> = seqs.iter().filter(|s| s.len() > late).collect();
    if usable.is_empty() {
        return Err(Error::Precondition(format!(
            "no sequence is longer than the late index {late}"
        )));
    }
    let losses: Vec<(f64, f64)> = usable
        .par_iter()
        .map(|s| {
            let pass = model.forward(s)?;
            Ok((token_loss(&pass.logits, s, early), token_loss(&pass.logits, s, late)))
        })
        .collect::<Result<_>>()?;
    let (loss_early, loss_late): (Vec<f64>, Vec<f64>) = losses.into_iter().unzip();
    let deltas: Vec<f64> = loss_late.iter().zip(&loss_early).map(|(l, e)| l - e).collect();
    Ok(IclReport {
        early,
        late,
        icl_score: deltas.iter().sum::<f64>() / deltas.len() as f64,
        sem: sem(&deltas),
        loss_early,
        loss_late,
        n_skipped: seqs.len() - usable.len(),
    })
}

/// `n_sequences` sequences, each a seeded draw of `n_unique` distinct tokens
/// from the vocabulary, repeated twice.
pub fn repeated_sequences(
    n_sequences: usize,
    n_unique: usize,
    vocab_size: usize,
    seed: u64,
) -> Result<Vec<TokenSequence>> {
    if n_unique == 0 || n_unique > vocab_size {
        return Err(Error::InvalidParameter(format!(
            "cannot draw {n_unique} distinct tokens from a vocabulary of {vocab_size}"
        )));
    }
    (0..n_sequences)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let perm: Vec<u32> = sample(&mut rng, vocab_size, n_unique)
                .into_iter()
                .map(|t| t as u32)
                .collect();
            TokenSequence::new(perm.iter().chain(&perm).copied().collect())
        })
        .collect()
}
