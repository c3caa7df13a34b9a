//! Per-head behavioural metrics: prefix matching, copying and lag CRP of
//! attention scores, plus the repeated-token evaluation prompt.

mod attention;
mod copying;
mod prompt;

pub use attention::{attention_crp, matching_score, target_pattern, AttentionKind, AttentionMatrix};
pub use copying::{copying_score, full_circuit, reduced_kernel, CopyKernel};
pub use prompt::{gen_prompt, rank_vocab_by_bias, PromptSpec, TokenSequence};
