use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::context::ItemEmbedding;
use super::memory::{encode_list, identity_list, MemoryState};
use super::params::CmrParams;
use crate::error::{Error, Result};

/// How the first recall of a trial is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecallStart {
    /// Reinstate the pre-list context `t_0` and sample the first recall from it.
    #[default]
    ListStart,
    /// Sample the first recall from the end-of-list context.
    EndOfList,
    /// Force the first recall to a uniformly drawn study position, then
    /// continue from the end-of-list context. Used for single-transition
    /// Monte-Carlo estimates.
    RandomPosition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecallOptions {
    pub start: RecallStart,
    /// Maximum number of recalls per trial; defaults to the list length.
    pub max_recalls: Option<usize>,
    pub record_distributions: bool,
}

impl Default for RecallOptions {
    fn default() -> Self {
        Self {
            start: RecallStart::ListStart,
            max_recalls: None,
            record_distributions: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Every item was recalled.
    Exhausted,
    /// The recall budget was spent.
    MaxRecalls,
    /// The sampler drew an already-recalled position (not appended to the trace).
    Repeat(usize),
}

/// One simulated recall sequence. Positions are 0-based study positions.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallTrace {
    pub list_len: usize,
    pub recalled_positions: Vec<usize>,
    /// Distribution each sampled recall was drawn from (forced starts have none).
    pub step_distributions: Option<Vec<Vec<f64>>>,
    pub stop: StopReason,
    pub seed: u64,
    pub trial: u64,
}

impl RecallTrace {
    /// Consecutive (from, to) transitions, including a terminal repeat.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let tail = match self.stop {
            StopReason::Repeat(p) => self.recalled_positions.last().map(|&last| (last, p)),
            _ => None,
        };
        self.recalled_positions
            .windows(2)
            .map(|w| (w[0], w[1]))
            .chain(tail)
    }
}

/// Sample `n_trials` free-recall sequences for the list `0..list_len`.
///
/// Trial `k` uses a ChaCha8 stream `k` seeded with `seed`, so results are
/// identical regardless of thread scheduling.
pub fn simulate_recall(
    params: &CmrParams,
    list_len: usize,
    n_trials: usize,
    seed: u64,
    options: RecallOptions,
) -> Result<Vec<RecallTrace>> {
    if n_trials == 0 {
        return Err(Error::InvalidParameter("n_trials must be at least 1".into()));
    }
    if list_len == 0 {
        return Err(Error::InvalidParameter("list_len must be at least 1".into()));
    }
    let items = identity_list(list_len);
    let (encoded, contexts) = encode_list(&items, params)?;
    let max_recalls = options.max_recalls.unwrap_or(list_len).min(list_len);

    (0..n_trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial);
            let mut state = encoded.clone();
            if options.start == RecallStart::ListStart {
                state.set_context(contexts[0].clone())?;
            }
            run_trial(&mut state, &items, params, max_recalls, options, &mut rng).map(
                |(recalled, dists, stop)| RecallTrace {
                    list_len,
                    recalled_positions: recalled,
                    step_distributions: dists,
                    stop,
                    seed,
                    trial,
                },
            )
        })
        .collect()
}

type TrialOutcome = (Vec<usize>, Option<Vec<Vec<f64>>>, StopReason);

fn run_trial<R: Rng>(
    state: &mut MemoryState,
    items: &[ItemEmbedding],
    params: &CmrParams,
    max_recalls: usize,
    options: RecallOptions,
    rng: &mut R,
) -> Result<TrialOutcome> {
    let n = items.len();
    let mut recalled = Vec::with_capacity(max_recalls);
    let mut seen = vec![false; n];
    let mut dists = options.record_distributions.then(Vec::new);

    if options.start == RecallStart::RandomPosition && max_recalls > 0 {
        let p = rng.gen_range(0..n);
        recalled.push(p);
        seen[p] = true;
        state.retrieve(items[p], params)?;
    }
    while recalled.len() < max_recalls {
        let dist = state.next_recall_distribution(params.inv_temp())?;
        let sampler = WeightedIndex::new(&dist)
            .map_err(|e| Error::Numerical(format!("invalid recall distribution: {e}")))?;
        let p = sampler.sample(rng);
        if let Some(d) = dists.as_mut() {
            d.push(dist);
        }
        if seen[p] {
            return Ok((recalled, dists, StopReason::Repeat(p)));
        }
        seen[p] = true;
        recalled.push(p);
        state.retrieve(items[p], params)?;
    }
    let stop = if recalled.len() == n {
        StopReason::Exhausted
    } else {
        StopReason::MaxRecalls
    };
    Ok((recalled, dists, stop))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_traces() {
        let p = CmrParams::new(0.7, 0.6, 0.3, 4.0).unwrap();
        let opts = RecallOptions {
            record_distributions: true,
            ..Default::default()
        };
        let a = simulate_recall(&p, 12, 20, 99, opts).unwrap();
        let b = simulate_recall(&p, 12, 20, 99, opts).unwrap();
        assert_eq!(a, b);
        let c = simulate_recall(&p, 12, 20, 100, opts).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn chaining_recalls_in_order() {
        let p = CmrParams::new(1.0, 1.0, 0.0, 100.0).unwrap();
        let traces = simulate_recall(&p, 10, 50, 7, RecallOptions::default()).unwrap();
        for t in traces {
            assert_eq!(t.recalled_positions, (0..10).collect::<Vec<_>>());
            assert_eq!(t.stop, StopReason::Exhausted);
        }
    }

    #[test]
    fn step_distributions_are_normalised() {
        let p = CmrParams::new(0.4, 0.8, 0.5, 2.0).unwrap();
        let opts = RecallOptions {
            record_distributions: true,
            start: RecallStart::EndOfList,
            max_recalls: Some(6),
        };
        for t in simulate_recall(&p, 8, 30, 1, opts).unwrap() {
            for d in t.step_distributions.unwrap() {
                assert!(d.iter().all(|&x| x >= 0.0));
                assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            assert!(t.recalled_positions.len() <= 6);
        }
    }

    #[test]
    fn zero_trials_rejected() {
        let p = CmrParams::new(0.5, 0.5, 0.5, 1.0).unwrap();
        assert!(simulate_recall(&p, 5, 0, 0, RecallOptions::default()).is_err());
    }
}
