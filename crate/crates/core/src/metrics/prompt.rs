use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token ids with the beginning-of-sequence token at index 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    tokens: Vec<u32>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<u32>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Data("empty token sequence".into()));
        }
        Ok(Self { tokens })
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// `Some(N)` when the sequence is `[BOS] + perm + perm` with `perm` a
    /// sequence of `N` distinct tokens.
    pub fn repeat_length(&self) -> Option<usize> {
        let len = self.tokens.len();
        if len < 3 || len.is_multiple_of(2) {
            return None;
        }
        let n = (len - 1) / 2;
        let (first, second) = self.tokens[1..].split_at(n);
        if first != second {
            return None;
        }
        let mut sorted = first.to_vec();
        sorted.sort_unstable();
        sorted.windows(2).all(|w| w[0] != w[1]).then_some(n)
    }
}

/// Recipe for the repeated random-token prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub n_unique: usize,
    pub seed: u64,
    /// Candidate tokens, most preferred first.
    pub vocab_ranking: Vec<u32>,
    pub bos_token: u32,
}

impl PromptSpec {
    pub const DEFAULT_N_UNIQUE: usize = 100;
}

/// Token ids sorted by descending unembedding bias; ties go to the smaller id.
pub fn rank_vocab_by_bias(bias: &[f64]) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..bias.len() as u32).collect();
    ids.sort_by(|&a, &b| {
        bias[b as usize]
            .total_cmp(&bias[a as usize])
            .then(a.cmp(&b))
    });
    ids
}

/// `[BOS] + perm + perm`, where `perm` is a seeded permutation of the top
/// `n_unique` ranked tokens. Length `2 N + 1`.
pub fn gen_prompt(spec: &PromptSpec) -> Result<TokenSequence> {
    if spec.n_unique == 0 {
        return Err(Error::InvalidParameter("n_unique must be positive".into()));
    }
    let mut pool: Vec<u32> = Vec::with_capacity(spec.n_unique);
    for &tok in &spec.vocab_ranking {
        if pool.len() == spec.n_unique {
            break;
        }
        if tok != spec.bos_token && !pool.contains(&tok) {
            pool.push(tok);
        }
    }
    if pool.len() < spec.n_unique {
        return Err(Error::InvalidParameter(format!(
            "vocabulary ranking has {} usable tokens, prompt needs {}",
            pool.len(),
            spec.n_unique
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    pool.shuffle(&mut rng);
    let mut tokens = Vec::with_capacity(2 * spec.n_unique + 1);
    tokens.push(spec.bos_token);
    tokens.extend_from_slice(&pool);
    tokens.extend_from_slice(&pool);
    TokenSequence::new(tokens)
}
