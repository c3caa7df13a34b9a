//! Two-layer attention-only toy transformer with hand-wired circuits,
//! head ablation and in-context-learning scores.
//!
//! Tokens and positions embed as one-hot vectors in the first `V + P`
//! residual dimensions. There are no MLPs and no layer norm; the memory-model
//! circuit adds a fixed per-position context recurrence between the layers.

mod ablation;
mod circuits;
mod icl;
mod model;

pub use ablation::{n_ablated, run_ablation, AblationReport, AblationSpec};
pub use circuits::{
    build_cmr_attention, build_induction_ensemble, build_k_composition, build_q_composition, build_random,
    cmr_config, k_composition_config, q_composition_config, CircuitOptions, CmrTokens, ENSEMBLE_PREV_SCALES,
    ENSEMBLE_WEAK_GAIN, ENSEMBLE_WEAK_OUT, SATURATION_GAIN,
};
pub use icl::{icl_score, repeated_sequences, token_loss, IclReport, DEFAULT_EARLY, DEFAULT_LATE};
pub use model::{
    AblationFill, AblationMode, ContextRecurrence, ForwardPass, HeadId, HeadKind, HeadWeights, ToyConfig, ToyModel,
    N_LAYERS,
};

use crate::error::{Error, Result};
use crate::export::{Export, HeadData};
use crate::metrics::{gen_prompt, rank_vocab_by_bias, reduced_kernel, PromptSpec, TokenSequence};

/// Designed prompt for a toy vocabulary: the last token id is BOS and the
/// repeated tokens are a seeded permutation of the lowest `n_unique` ids
/// (all unembedding biases are zero, so ranking falls back to token id).
pub fn toy_prompt(vocab_size: usize, n_unique: usize, seed: u64) -> Result<TokenSequence> {
    if vocab_size == 0 {
        return Err(Error::InvalidParameter("empty vocabulary".into()));
    }
    gen_prompt(&PromptSpec {
        n_unique,
        seed,
        vocab_ranking: rank_vocab_by_bias(&vec![0.0; vocab_size]),
        bos_token: (vocab_size - 1) as u32,
    })
}

/// Reduced copy kernel `W_V W_E W_U W_O` of one head.
pub fn head_kernel(model: &ToyModel, id: HeadId) -> Result<nalgebra::DMatrix<f64>> {
    let h = model.head(id)?;
    Ok(reduced_kernel(&model.w_u, &h.w_o, &h.w_v, &model.w_e))
}

/// Run the model on `prompt` and package every head in the export format.
pub fn export_toy(model: &ToyModel, model_name: &str, prompt: &TokenSequence) -> Result<Export> {
    let pass = model.forward(prompt)?;
    let heads = model
        .head_ids()
        .into_iter()
        .map(|id| {
            Ok(HeadData {
                layer: id.layer,
                head: id.head,
                scores: pass.scores[id.layer][id.head].clone(),
                pattern: pass.patterns[id.layer][id.head].clone(),
                kernel: head_kernel(model, id)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Export {
        model_name: model_name.into(),
        n_layers: N_LAYERS,
        n_heads: model.config.n_heads,
        d_head: model.config.d_head,
        prompt: prompt.clone(),
        extracted_at: "toy".into(),
        heads,
    })
}
