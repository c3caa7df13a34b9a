//! Hand-wired two-layer induction circuits.
//!
//! Every construction uses one-hot token (`TE`) and position (`PE`) bases in
//! the first `V + P` residual dimensions and appends private subspaces for
//! the values written by layer 0 and layer 1.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::model::{ContextRecurrence, HeadKind, HeadWeights, ToyConfig, ToyModel};
use crate::cmr::CmrParams;
use crate::error::{Error, Result};

/// Score gain that saturates the softmax on a matched source.
pub const SATURATION_GAIN: f64 = 30.0;

/// Options shared by the circuit builders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitOptions {
    pub vocab_size: usize,
    pub max_len: usize,
    /// Heads per layer; heads beyond the wired ones have zero weights.
    pub n_heads: usize,
    pub gain: f64,
    /// Scale of the copied token written for the unembedding.
    pub out_gain: f64,
    pub seed: u64,
}

impl Default for CircuitOptions {
    fn default() -> Self {
        Self {
            vocab_size: 64,
            max_len: 128,
            n_heads: 1,
            gain: SATURATION_GAIN,
            out_gain: 10.0,
            seed: 0,
        }
    }
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}

fn check_fits(config: &ToyConfig, d_model: usize, d_head: usize, what: &str) -> Result<()> {
    config.validate()?;
    require(config.d_model >= d_model && config.d_head >= d_head, || {
        format!(
            "config too small for {what}: needs d_model >= {d_model} and d_head >= {d_head}, got {} and {}",
            config.d_model, config.d_head
        )
    })
}

/// Smallest config for the K-composition circuit:
/// residual `TE | PE | PREV | OUT`.
pub fn k_composition_config(vocab_size: usize, max_len: usize, n_heads: usize) -> ToyConfig {
    ToyConfig {
        vocab_size,
        max_len,
        d_model: 3 * vocab_size + max_len,
        d_head: (vocab_size + 1).max(max_len),
        n_heads,
    }
}

/// Smallest config for the Q-composition circuit:
/// residual `TE | PE | DUP | OUT`.
pub fn q_composition_config(vocab_size: usize, max_len: usize, n_heads: usize) -> ToyConfig {
    ToyConfig {
        vocab_size,
        max_len,
        d_model: 2 * vocab_size + 2 * max_len,
        d_head: vocab_size + max_len,
        n_heads,
    }
}

/// Previous-token head: attends from `i` to `i - 1` and copies that token
/// into the `PREV` subspace at `prev_off`, scaled by `value_scale`.
fn previous_token_head(config: &ToyConfig, gain: f64, prev_off: usize, value_scale: f64) -> HeadWeights {
    let (v, p) = (config.vocab_size, config.max_len);
    let g = gain * (config.d_head as f64).sqrt();
    let mut h = HeadWeights::zeros(config, HeadKind::Softmax);
    for pos in 0..p {
        h.w_q[(pos, v + pos)] = g;
        if pos + 1 < config.d_head {
            h.w_k[(pos + 1, v + pos)] = 1.0;
        }
    }
    for t in 0..v {
        h.w_v[(t, t)] = 1.0;
        h.w_o[(prev_off + t, t)] = value_scale;
    }
    h
}

/// Induction head: the current token queries `PREV`, and the attended token
/// is copied into `OUT`.
///
/// Position 0 has no predecessor, so its `PREV` holds its own token. Query
/// row `V` is constant (every token writes to it) and meets `-PE_0` in the
/// key, which cancels any match at position 0.
fn induction_head(config: &ToyConfig, gain: f64, prev_off: usize, out_off: usize, out_gain: f64) -> HeadWeights {
    let v = config.vocab_size;
    let g = gain * (config.d_head as f64).sqrt();
    let mut h = HeadWeights::zeros(config, HeadKind::Softmax);
    for t in 0..v {
        h.w_q[(t, t)] = g;
        h.w_q[(v, t)] = g;
        h.w_k[(t, prev_off + t)] = 1.0;
        h.w_v[(t, t)] = 1.0;
        h.w_o[(out_off + t, t)] = out_gain;
    }
    h.w_k[(v, v)] = -1.0;
    h
}

fn unembed_from(model: &mut ToyModel, out_off: usize) {
    for t in 0..model.config.vocab_size {
        model.w_u[(t, out_off + t)] = 1.0;
    }
}

/// K-composition: a previous-token head in layer 0 writes `TE_{i-1}` into
/// `PREV`, and the layer-1 head matches the current token against it.
pub fn build_k_composition(config: ToyConfig, gain: f64, out_gain: f64) -> Result<ToyModel> {
    let (v, p) = (config.vocab_size, config.max_len);
    check_fits(&config, 3 * v + p, (v + 1).max(p), "K-composition")?;
    let prev_off = v + p;
    let out_off = 2 * v + p;
    let mut m = ToyModel::blank(config, HeadKind::Softmax)?;
    m.layers[0][0] = previous_token_head(&config, gain, prev_off, 1.0);
    m.layers[1][0] = induction_head(&config, gain, prev_off, out_off, out_gain);
    unembed_from(&mut m, out_off);
    Ok(m)
}

/// Q-composition: a duplicate-token head in layer 0 writes the position of
/// the earlier copy of the current token into `DUP`; the layer-1 query
/// shifts that position by one and matches it against `PE`.
///
/// The +1 shift sits in the layer-1 query map; placing it in the key map
/// instead gives the same scores.
pub fn build_q_composition(config: ToyConfig, gain: f64, out_gain: f64) -> Result<ToyModel> {
    let (v, p) = (config.vocab_size, config.max_len);
    check_fits(&config, 2 * v + 2 * p, v + p, "Q-composition")?;
    let dup_off = v + p;
    let out_off = v + 2 * p;
    let g = gain * (config.d_head as f64).sqrt();
    let mut m = ToyModel::blank(config, HeadKind::Softmax)?;

    let mut dup = HeadWeights::zeros(&config, HeadKind::Softmax);
    for t in 0..v {
        dup.w_q[(t, t)] = g;
        dup.w_k[(t, t)] = 1.0;
    }
    for pos in 0..p {
        // Same-position match cancels the token match, so a token never
        // selects itself.
        dup.w_q[(v + pos, v + pos)] = -g;
        dup.w_k[(v + pos, v + pos)] = 1.0;
        dup.w_v[(pos, v + pos)] = 1.0;
        dup.w_o[(dup_off + pos, pos)] = 1.0;
    }
    m.layers[0][0] = dup;

    let mut ind = HeadWeights::zeros(&config, HeadKind::Softmax);
    for pos in 0..p {
        if pos + 1 < p {
            ind.w_q[(pos + 1, dup_off + pos)] = g;
        }
        ind.w_k[(pos, v + pos)] = 1.0;
    }
    for t in 0..v {
        ind.w_v[(t, t)] = 1.0;
        ind.w_o[(out_off + t, t)] = out_gain;
    }
    m.layers[1][0] = ind;
    unembed_from(&mut m, out_off);
    Ok(m)
}

/// Token layout of the memory-model circuit over `n` items: tokens `0..n`
/// study item `i`, tokens `n..2n` recall item `i - n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CmrTokens {
    pub n_items: usize,
}

impl CmrTokens {
    pub fn study(&self, item: usize) -> u32 {
        item as u32
    }

    pub fn recall(&self, item: usize) -> u32 {
        (self.n_items + item) as u32
    }
}

/// Config for the memory-model circuit: residual
/// `TE(2n) | PE | PREV(n+1) | EXP(n+1) | CTX(n+1) | OUT(n)`.
pub fn cmr_config(n_items: usize, max_len: usize) -> ToyConfig {
    ToyConfig {
        vocab_size: 2 * n_items,
        max_len,
        d_model: 2 * n_items + max_len + 3 * (n_items + 1) + n_items,
        d_head: n_items + 1,
        n_heads: 1,
    }
}

/// The memory model as two linear-attention heads around a context
/// recurrence.
///
/// Layer 0 retrieves `sum_j <f_j, f_k> t_{j-1}` (item-to-context
/// associations); the recurrence mixes it with the pre-experimental item
/// input and updates the context; layer 1 retrieves
/// `sum_j <t_{j-1}, t_k> f_j` (context-to-item associations). The recall-token
/// logits are those strengths times `inv_temp`.
pub fn build_cmr_attention(params: &CmrParams, config: ToyConfig) -> Result<ToyModel> {
    require(config.vocab_size >= 2 && config.vocab_size.is_multiple_of(2), || {
        format!("vocab_size {} must be 2 * n_items", config.vocab_size)
    })?;
    let n = config.vocab_size / 2;
    let needed = cmr_config(n, config.max_len);
    check_fits(&config, needed.d_model, needed.d_head, "the memory-model circuit")?;
    let p = config.max_len;
    let (f_s, f_r) = (0, n);
    let prev = 2 * n + p;
    let exp = prev + n + 1;
    let ctx = exp + n + 1;
    let out = ctx + n + 1;

    let mut m = ToyModel::blank(config, HeadKind::Linear)?;
    let mut l0 = HeadWeights::zeros(&config, HeadKind::Linear);
    for i in 0..n {
        l0.w_q[(i, f_r + i)] = 1.0;
        l0.w_k[(i, f_s + i)] = 1.0;
    }
    for a in 0..=n {
        l0.w_v[(a, prev + a)] = 1.0;
        l0.w_o[(exp + a, a)] = 1.0;
    }
    let mut l1 = HeadWeights::zeros(&config, HeadKind::Linear);
    for a in 0..=n {
        l1.w_q[(a, ctx + a)] = 1.0;
        l1.w_k[(a, prev + a)] = 1.0;
    }
    for i in 0..n {
        l1.w_v[(i, f_s + i)] = 1.0;
        l1.w_o[(out + i, i)] = 1.0;
    }
    m.layers[0][0] = l0;
    m.layers[1][0] = l1;
    for i in 0..n {
        m.w_u[(n + i, out + i)] = params.inv_temp();
    }
    m.recurrence = Some(ContextRecurrence {
        n_items: n,
        beta_enc: params.beta_enc(),
        beta_rec: params.beta_rec(),
        gamma_ft: params.gamma_ft(),
        f_s,
        f_r,
        prev,
        exp,
        ctx,
    });
    Ok(m)
}

/// Value scales of the previous-token heads in [`build_induction_ensemble`].
pub const ENSEMBLE_PREV_SCALES: [f64; 4] = [0.55, 0.2, 0.15, 0.1];
/// Gain and output scale of the weaker induction heads.
pub const ENSEMBLE_WEAK_GAIN: f64 = 6.0;
pub const ENSEMBLE_WEAK_OUT: f64 = 1.5;

/// Four heads per layer: layer 0 holds previous-token heads of different
/// strengths, layer 1 one saturated induction head (head 0) and three weaker
/// ones. Every head helps in-context prediction; head `(1, 0)` the most.
pub fn build_induction_ensemble(vocab_size: usize, max_len: usize, gain: f64, out_gain: f64) -> Result<ToyModel> {
    let config = k_composition_config(vocab_size, max_len, 4);
    let (v, p) = (vocab_size, max_len);
    let prev_off = v + p;
    let out_off = 2 * v + p;
    let mut m = ToyModel::blank(config, HeadKind::Softmax)?;
    for (h, &s) in ENSEMBLE_PREV_SCALES.iter().enumerate() {
        m.layers[0][h] = previous_token_head(&config, gain, prev_off, s);
    }
    m.layers[1][0] = induction_head(&config, gain, prev_off, out_off, out_gain);
    for h in 1..4 {
        m.layers[1][h] = induction_head(&config, ENSEMBLE_WEAK_GAIN, prev_off, out_off, ENSEMBLE_WEAK_OUT);
    }
    unembed_from(&mut m, out_off);
    Ok(m)
}

/// Gaussian random weights with standard deviation `1/sqrt(d_model)`.
pub fn build_random(config: ToyConfig, seed: u64) -> Result<ToyModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = ToyModel::blank(config, HeadKind::Softmax)?;
    let normal = Normal::new(0.0, 1.0 / (config.d_model as f64).sqrt())
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut draw = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| normal.sample(&mut rng));
    for layer in m.layers.iter_mut() {
        for h in layer.iter_mut() {
            h.w_q = draw(config.d_head, config.d_model);
            h.w_k = draw(config.d_head, config.d_model);
            h.w_v = draw(config.d_head, config.d_model);
            h.w_o = draw(config.d_model, config.d_head);
        }
    }
    m.w_u = draw(config.vocab_size, config.d_model);
    Ok(m)
}
