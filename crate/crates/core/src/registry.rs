//! Name-keyed registries of interchangeable algorithms.
//!
//! Head metrics, lag-profile fitters and toy circuit builders each sit behind
//! a trait; the CLI picks implementations by name at runtime.

use std::sync::Arc;

use crate::cmr::CmrParams;
use crate::error::{Error, Result};
use crate::export::HeadData;
use crate::fit::{fit_cmr, fit_gaussian, CrpTable};
use crate::lag::LagProfile;
use crate::metrics::{attention_crp, copying_score, matching_score, target_pattern, TokenSequence};
use crate::toy::{
    build_cmr_attention, build_induction_ensemble, build_k_composition, build_q_composition, build_random,
    cmr_config, k_composition_config, q_composition_config, CircuitOptions, ToyConfig, ToyModel,
};

/// Ordered list of named implementations.
pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: Vec<(String, Arc<T>)>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Adds or replaces the entry called `name`.
    pub fn register(&mut self, name: &str, item: Arc<T>) {
        match self.entries.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = item,
            None => self.entries.push((name.to_string(), item)),
        }
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| Arc::clone(v))
            .ok_or_else(|| Error::Unknown {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Arc<T>)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }
}

/// What a head metric sees: one head's exported tensors and the prompt they
/// were recorded on.
pub struct HeadInput<'a> {
    pub head: &'a HeadData,
    pub prompt: &'a TokenSequence,
    pub lag_range: usize,
}

impl HeadInput<'_> {
    /// Lag-CRP of the head's raw scores.
    pub fn profile(&self) -> Result<LagProfile> {
        let n = self.prompt.repeat_length().ok_or_else(|| {
            Error::Data("prompt is not [BOS] + perm + perm, so the repeat length is unknown".into())
        })?;
        attention_crp(&self.head.scores_matrix()?, n, self.lag_range)
    }
}

pub trait HeadMetric: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether larger values mark a head as more induction-like (used for
    /// ranking heads to ablate).
    fn higher_is_stronger(&self) -> bool;

    /// `None` when the metric does not apply to this head.
    fn score(&self, input: &HeadInput) -> Result<Option<f64>>;
}

/// Result of fitting a model curve to a lag profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileFit {
    pub distance: f64,
    /// Best grid parameters, for memory-model fitters.
    pub params: Option<CmrParams>,
    /// Curve coefficients, for parametric fitters.
    pub coefficients: Vec<f64>,
}

pub trait ProfileFitter: Send + Sync {
    fn name(&self) -> &'static str;
    fn fit(&self, profile: &LagProfile) -> Result<ProfileFit>;
}

pub trait CircuitBuilder: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn build(&self, opts: &CircuitOptions) -> Result<ToyModel>;
}

pub struct MatchingScore;

impl HeadMetric for MatchingScore {
    fn name(&self) -> &'static str {
        "matching_score"
    }

    fn higher_is_stronger(&self) -> bool {
        true
    }

    fn score(&self, input: &HeadInput) -> Result<Option<f64>> {
        let Some(pattern) = input.head.pattern_matrix()? else {
            return Ok(None);
        };
        match matching_score(&pattern, &target_pattern(input.prompt)) {
            Ok(s) => Ok(Some(s)),
            Err(Error::Degenerate(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

pub struct CopyingScore;

impl HeadMetric for CopyingScore {
    fn name(&self) -> &'static str {
        "copying_score"
    }

    fn higher_is_stronger(&self) -> bool {
        true
    }

    fn score(&self, input: &HeadInput) -> Result<Option<f64>> {
        copying_score(&input.head.copy_kernel()?).map(Some)
    }
}

/// Distance of a head's lag-CRP to the best fit of `fitter`; smaller is more
/// like the fitted model.
pub struct FitDistance {
    name: &'static str,
    fitter: Arc<dyn ProfileFitter>,
}

impl FitDistance {
    pub fn new(name: &'static str, fitter: Arc<dyn ProfileFitter>) -> Self {
        Self { name, fitter }
    }
}

impl HeadMetric for FitDistance {
    fn name(&self) -> &'static str {
        self.name
    }

    fn higher_is_stronger(&self) -> bool {
        false
    }

    fn score(&self, input: &HeadInput) -> Result<Option<f64>> {
        Ok(Some(self.fitter.fit(&input.profile()?)?.distance))
    }
}

/// Exhaustive search of a precomputed CRP table.
pub struct CmrGridFitter {
    pub table: Arc<CrpTable>,
}

impl ProfileFitter for CmrGridFitter {
    fn name(&self) -> &'static str {
        "cmr"
    }

    fn fit(&self, profile: &LagProfile) -> Result<ProfileFit> {
        let r = fit_cmr(profile, &self.table)?;
        Ok(ProfileFit {
            distance: r.distance,
            params: Some(r.best_params),
            coefficients: Vec::new(),
        })
    }
}

pub struct GaussianFitter;

impl ProfileFitter for GaussianFitter {
    fn name(&self) -> &'static str {
        "gaussian"
    }

    fn fit(&self, profile: &LagProfile) -> Result<ProfileFit> {
        let g = fit_gaussian(profile)?;
        Ok(ProfileFit {
            distance: g.distance,
            params: None,
            coefficients: vec![g.c1, g.c2, g.c3, g.c4],
        })
    }
}

struct KComposition;
struct QComposition;
struct InductionEnsemble;
struct RandomWeights;

/// The memory-model circuit over `vocab_size / 2` items.
pub struct CmrCircuit {
    pub params: CmrParams,
}

impl CircuitBuilder for KComposition {
    fn name(&self) -> &'static str {
        "k-composition"
    }

    fn description(&self) -> &'static str {
        "previous-token head feeding an induction head through its keys"
    }

    fn build(&self, o: &CircuitOptions) -> Result<ToyModel> {
        build_k_composition(k_composition_config(o.vocab_size, o.max_len, o.n_heads), o.gain, o.out_gain)
    }
}

impl CircuitBuilder for QComposition {
    fn name(&self) -> &'static str {
        "q-composition"
    }

    fn description(&self) -> &'static str {
        "duplicate-token head feeding a position-shifted query"
    }

    fn build(&self, o: &CircuitOptions) -> Result<ToyModel> {
        build_q_composition(q_composition_config(o.vocab_size, o.max_len, o.n_heads), o.gain, o.out_gain)
    }
}

impl CircuitBuilder for InductionEnsemble {
    fn name(&self) -> &'static str {
        "induction-ensemble"
    }

    fn description(&self) -> &'static str {
        "four previous-token heads and four induction heads of graded strength"
    }

    fn build(&self, o: &CircuitOptions) -> Result<ToyModel> {
        build_induction_ensemble(o.vocab_size, o.max_len, o.gain, o.out_gain)
    }
}

impl CircuitBuilder for RandomWeights {
    fn name(&self) -> &'static str {
        "random"
    }

    fn description(&self) -> &'static str {
        "Gaussian random weights"
    }

    fn build(&self, o: &CircuitOptions) -> Result<ToyModel> {
        let d_head = 16;
        build_random(ToyConfig::new(o.vocab_size, o.max_len, d_head, o.n_heads), o.seed)
    }
}

impl CircuitBuilder for CmrCircuit {
    fn name(&self) -> &'static str {
        "cmr"
    }

    fn description(&self) -> &'static str {
        "memory model as linear attention with a context recurrence"
    }

    fn build(&self, o: &CircuitOptions) -> Result<ToyModel> {
        build_cmr_attention(&self.params, cmr_config(o.vocab_size / 2, o.max_len))
    }
}

pub fn profile_fitters(table: Arc<CrpTable>) -> Registry<dyn ProfileFitter> {
    let mut r: Registry<dyn ProfileFitter> = Registry::new("profile fitter");
    r.register("cmr", Arc::new(CmrGridFitter { table }));
    r.register("gaussian", Arc::new(GaussianFitter));
    r
}

/// Metrics that need no CRP table.
pub fn basic_head_metrics() -> Registry<dyn HeadMetric> {
    let mut r: Registry<dyn HeadMetric> = Registry::new("head metric");
    r.register("matching_score", Arc::new(MatchingScore));
    r.register("copying_score", Arc::new(CopyingScore));
    r.register(
        "gaussian_distance",
        Arc::new(FitDistance::new("gaussian_distance", Arc::new(GaussianFitter))),
    );
    r
}

pub fn head_metrics(table: Arc<CrpTable>) -> Registry<dyn HeadMetric> {
    let mut r = basic_head_metrics();
    r.register(
        "cmr_distance",
        Arc::new(FitDistance::new("cmr_distance", Arc::new(CmrGridFitter { table }))),
    );
    r
}

/// Circuit builders; `cmr_params` configures the `cmr` circuit.
pub fn circuit_builders(cmr_params: CmrParams) -> Registry<dyn CircuitBuilder> {
    let mut r: Registry<dyn CircuitBuilder> = Registry::new("circuit");
    r.register("k-composition", Arc::new(KComposition));
    r.register("q-composition", Arc::new(QComposition));
    r.register("induction-ensemble", Arc::new(InductionEnsemble));
    r.register("cmr", Arc::new(CmrCircuit { params: cmr_params }));
    r.register("random", Arc::new(RandomWeights));
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name_lists_alternatives() {
        let r = basic_head_metrics();
        let err = r.get("nope").err().unwrap().to_string();
        assert!(err.contains("matching_score") && err.contains("copying_score"), "{err}");
    }

    #[test]
    fn register_replaces_existing_entry() {
        let mut r = basic_head_metrics();
        let n = r.names().len();
        r.register("copying_score", Arc::new(MatchingScore));
        assert_eq!(r.names().len(), n);
        assert_eq!(r.get("copying_score").unwrap().name(), "matching_score");
    }

    #[test]
    fn every_circuit_builds() {
        let p = CmrParams::new(0.7, 0.7, 0.0, 2.0).unwrap();
        let opts = CircuitOptions {
            vocab_size: 12,
            max_len: 24,
            ..CircuitOptions::default()
        };
        for (name, b) in circuit_builders(p).iter() {
            let m = b.build(&opts).unwrap();
            m.validate().unwrap();
            assert_eq!(b.name(), name);
        }
    }
}
