use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{AttentionMatrix, TokenSequence};

pub const N_LAYERS: usize = 2;

/// Shape of a toy model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub vocab_size: usize,
    pub max_len: usize,
    pub d_model: usize,
    pub d_head: usize,
    /// Heads per layer.
    pub n_heads: usize,
}

impl ToyConfig {
    /// One-hot token and position subspaces only: `d_model = V + P`.
    pub fn new(vocab_size: usize, max_len: usize, d_head: usize, n_heads: usize) -> Self {
        Self {
            vocab_size,
            max_len,
            d_model: vocab_size + max_len,
            d_head,
            n_heads,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.max_len == 0 || self.d_head == 0 || self.n_heads == 0 {
            return Err(Error::InvalidParameter(format!("degenerate toy config {self:?}")));
        }
        if self.d_model < self.vocab_size + self.max_len {
            return Err(Error::InvalidParameter(format!(
                "d_model {} < vocab_size + max_len = {}",
                self.d_model,
                self.vocab_size + self.max_len
            )));
        }
        Ok(())
    }

    pub fn n_total_heads(&self) -> usize {
        N_LAYERS * self.n_heads
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    /// Scores scaled by `1/sqrt(d_head)`, then a causal softmax.
    Softmax,
    /// Raw causal scores used directly as weights.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HeadId {
    pub layer: usize,
    pub head: usize,
}

impl HeadId {
    pub fn new(layer: usize, head: usize) -> Self {
        Self { layer, head }
    }
}

impl fmt::Display for HeadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}H{}", self.layer, self.head)
    }
}

/// `w_q`, `w_k`, `w_v` are `d_head x d_model`; `w_o` is `d_model x d_head`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub w_q: DMatrix<f64>,
    pub w_k: DMatrix<f64>,
    pub w_v: DMatrix<f64>,
    pub w_o: DMatrix<f64>,
    pub kind: HeadKind,
}

impl HeadWeights {
    pub fn zeros(config: &ToyConfig, kind: HeadKind) -> Self {
        let (dh, dm) = (config.d_head, config.d_model);
        Self {
            w_q: DMatrix::zeros(dh, dm),
            w_k: DMatrix::zeros(dh, dm),
            w_v: DMatrix::zeros(dh, dm),
            w_o: DMatrix::zeros(dm, dh),
            kind,
        }
    }

    fn check(&self, config: &ToyConfig, id: HeadId) -> Result<()> {
        let (dh, dm) = (config.d_head, config.d_model);
        for (name, m, shape) in [
            ("w_q", &self.w_q, (dh, dm)),
            ("w_k", &self.w_k, (dh, dm)),
            ("w_v", &self.w_v, (dh, dm)),
            ("w_o", &self.w_o, (dm, dh)),
        ] {
            if m.shape() != shape {
                return Err(Error::InvalidParameter(format!(
                    "{id} {name} is {:?}, expected {shape:?}",
                    m.shape()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{id} {name} has non-finite entries")));
            }
        }
        Ok(())
    }
}

/// What an ablated head writes to the residual stream instead of its output.
#[derive(Debug, Clone, PartialEq)]
pub enum AblationFill {
    Zero,
    /// A fixed vector, typically the head's mean output on reference data.
    Mean(DVector<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationMode {
    Zero,
    Mean,
}

impl AblationMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            "mean" => Ok(Self::Mean),
            other => Err(Error::Unknown {
                kind: "ablation mode",
                name: other.into(),
                available: "zero, mean".into(),
            }),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Mean => "mean",
        }
    }
}

/// Position-by-position memory-model context update run between the layers.
///
/// Residual offsets locate the study-item (`f_s`) and recall-item (`f_r`)
/// token subspaces, and the previous-context, retrieved-context and
/// current-context subspaces, each `n_items + 1` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextRecurrence {
    pub n_items: usize,
    pub beta_enc: f64,
    pub beta_rec: f64,
    pub gamma_ft: f64,
    pub f_s: usize,
    pub f_r: usize,
    pub prev: usize,
    pub exp: usize,
    pub ctx: usize,
}

/// Two-layer attention-only transformer with an explicit residual stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub config: ToyConfig,
    /// `d_model x V`; column `t` is the embedding of token `t`.
    pub w_e: DMatrix<f64>,
    /// `d_model x P`; column `p` is the embedding of position `p`.
    pub w_p: DMatrix<f64>,
    /// `V x d_model`.
    pub w_u: DMatrix<f64>,
    pub layers: [Vec<HeadWeights>; N_LAYERS],
    pub recurrence: Option<ContextRecurrence>,
    pub ablated: BTreeMap<HeadId, AblationFill>,
}

/// Everything recorded during one forward pass. Matrices are indexed by
/// position in their rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    /// `[layer][head]`, causally masked raw scores (after the softmax scale).
    pub scores: [Vec<DMatrix<f64>>; N_LAYERS],
    /// `[layer][head]`, `None` for linear heads.
    pub patterns: [Vec<Option<DMatrix<f64>>>; N_LAYERS],
    /// `[layer][head]`, `T x d_model` residual contribution after ablation.
    pub head_outputs: [Vec<DMatrix<f64>>; N_LAYERS],
    pub embeddings: DMatrix<f64>,
    /// Writes of the context recurrence, zero when the model has none.
    pub recurrence: DMatrix<f64>,
    pub stream: DMatrix<f64>,
    /// `T x V`.
    pub logits: DMatrix<f64>,
}

impl ForwardPass {
    pub fn scores_matrix(&self, id: HeadId) -> Result<AttentionMatrix> {
        AttentionMatrix::scores(self.scores[id.layer][id.head].clone(), id.layer, id.head)
    }

    pub fn pattern_matrix(&self, id: HeadId) -> Result<Option<AttentionMatrix>> {
        self.patterns[id.layer][id.head]
            .as_ref()
            .map(|p| AttentionMatrix::pattern(p.clone(), id.layer, id.head))
            .transpose()
    }
}

fn causal_softmax(scores: &DMatrix<f64>) -> DMatrix<f64> {
    let t = scores.nrows();
    let mut out = DMatrix::zeros(t, t);
    for i in 0..t {
        let max = (0..=i).map(|j| scores[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for j in 0..=i {
            let e = (scores[(i, j)] - max).exp();
            out[(i, j)] = e;
            z += e;
        }
        for j in 0..=i {
            out[(i, j)] /= z;
        }
    }
    out
}

fn mask_upper(m: &mut DMatrix<f64>) {
    let t = m.nrows();
    for i in 0..t {
        for j in i + 1..t {
            m[(i, j)] = 0.0;
        }
    }
}

struct HeadResult {
    scores: DMatrix<f64>,
    pattern: Option<DMatrix<f64>>,
    output: DMatrix<f64>,
}

fn run_head(h: &HeadWeights, z: &DMatrix<f64>) -> HeadResult {
    let q = z * h.w_q.transpose();
    let k = z * h.w_k.transpose();
    let v = z * h.w_v.transpose();
    let mut scores = &q * k.transpose();
    let (weights, pattern) = match h.kind {
        HeadKind::Softmax => {
            scores /= (h.w_q.nrows() as f64).sqrt();
            mask_upper(&mut scores);
            let p = causal_softmax(&scores);
            (p.clone(), Some(p))
        }
        HeadKind::Linear => {
            mask_upper(&mut scores);
            (scores.clone(), None)
        }
    };
    let output = weights * v * h.w_o.transpose();
    HeadResult { scores, pattern, output }
}

impl ToyModel {
    /// Model with all-zero weights and one-hot token/position embeddings in
    /// the first `V + P` residual dimensions.
    pub fn blank(config: ToyConfig, kind: HeadKind) -> Result<Self> {
        config.validate()?;
        let (v, p, dm) = (config.vocab_size, config.max_len, config.d_model);
        let w_e = DMatrix::from_fn(dm, v, |r, c| if r == c { 1.0 } else { 0.0 });
        let w_p = DMatrix::from_fn(dm, p, |r, c| if r == v + c { 1.0 } else { 0.0 });
        let heads = vec![HeadWeights::zeros(&config, kind); config.n_heads];
        Ok(Self {
            config,
            w_e,
            w_p,
            w_u: DMatrix::zeros(v, dm),
            layers: [heads.clone(), heads],
            recurrence: None,
            ablated: BTreeMap::new(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        for (name, m, shape) in [
            ("w_e", &self.w_e, (c.d_model, c.vocab_size)),
            ("w_p", &self.w_p, (c.d_model, c.max_len)),
            ("w_u", &self.w_u, (c.vocab_size, c.d_model)),
        ] {
            if m.shape() != shape {
                return Err(Error::InvalidParameter(format!(
                    "{name} is {:?}, expected {shape:?}",
                    m.shape()
                )));
            }
        }
        for (l, heads) in self.layers.iter().enumerate() {
            if heads.len() != c.n_heads {
                return Err(Error::InvalidParameter(format!(
                    "layer {l} has {} heads, config says {}",
                    heads.len(),
                    c.n_heads
                )));
            }
            for (h, w) in heads.iter().enumerate() {
                w.check(c, HeadId::new(l, h))?;
            }
        }
        Ok(())
    }

    pub fn head_ids(&self) -> Vec<HeadId> {
        (0..N_LAYERS)
            .flat_map(|l| (0..self.config.n_heads).map(move |h| HeadId::new(l, h)))
            .collect()
    }

    pub fn head(&self, id: HeadId) -> Result<&HeadWeights> {
        self.layers
            .get(id.layer)
            .and_then(|l| l.get(id.head))
            .ok_or_else(|| Error::InvalidParameter(format!("no head {id} in this model")))
    }

    /// `d_model`-row embeddings of every position of `seq`.
    pub fn embed(&self, seq: &TokenSequence) -> Result<DMatrix<f64>> {
        let t = seq.len();
        if t > self.config.max_len {
            return Err(Error::InvalidParameter(format!(
                "sequence length {t} exceeds max_len {}",
                self.config.max_len
            )));
        }
        let mut z = DMatrix::zeros(t, self.config.d_model);
        for (i, &tok) in seq.tokens().iter().enumerate() {
            let tok = tok as usize;
            if tok >= self.config.vocab_size {
                return Err(Error::InvalidParameter(format!(
                    "token {tok} outside vocabulary of {}",
                    self.config.vocab_size
                )));
            }
            let row = self.w_e.column(tok) + self.w_p.column(i);
            z.set_row(i, &row.transpose());
        }
        Ok(z)
    }

    fn fill(&self, id: HeadId, t: usize) -> Option<DMatrix<f64>> {
        self.ablated.get(&id).map(|f| match f {
            AblationFill::Zero => DMatrix::zeros(t, self.config.d_model),
            AblationFill::Mean(m) => DMatrix::from_fn(t, self.config.d_model, |_, c| m[c]),
        })
    }

    pub fn forward(&self, seq: &TokenSequence) -> Result<ForwardPass> {
        let emb = self.embed(seq)?;
        let t = emb.nrows();
        let dm = self.config.d_model;
        let mut recurrence = DMatrix::zeros(t, dm);

        let layer0 = match &self.recurrence {
            None => self.layers[0].iter().map(|h| run_head(h, &emb)).collect::<Vec<_>>(),
            Some(rec) => self.recurrent_layer0(&emb, rec, &mut recurrence)?,
        };
        let mut scores0 = Vec::new();
        let mut patterns0 = Vec::new();
        let mut outputs0 = Vec::new();
        for (h, r) in layer0.into_iter().enumerate() {
            scores0.push(r.scores);
            patterns0.push(r.pattern);
            outputs0.push(self.fill(HeadId::new(0, h), t).unwrap_or(r.output));
        }
        let mut stream = &emb + &recurrence;
        for o in &outputs0 {
            stream += o;
        }

        let mut scores1 = Vec::new();
        let mut patterns1 = Vec::new();
        let mut outputs1 = Vec::new();
        for (h, w) in self.layers[1].iter().enumerate() {
            let r = run_head(w, &stream);
            scores1.push(r.scores);
            patterns1.push(r.pattern);
            outputs1.push(self.fill(HeadId::new(1, h), t).unwrap_or(r.output));
        }
        for o in &outputs1 {
            stream += o;
        }
        let logits = &stream * self.w_u.transpose();
        Ok(ForwardPass {
            scores: [scores0, scores1],
            patterns: [patterns0, patterns1],
            head_outputs: [outputs0, outputs1],
            embeddings: emb,
            recurrence,
            stream,
            logits,
        })
    }

    /// Layer 0 evaluated one position at a time, interleaved with the context
    /// recurrence: position `k` first receives the carried context in the
    /// previous-context subspace, then the layer-0 heads read it, then the
    /// recurrence writes the updated context.
    fn recurrent_layer0(
        &self,
        emb: &DMatrix<f64>,
        rec: &ContextRecurrence,
        writes: &mut DMatrix<f64>,
    ) -> Result<Vec<HeadResult>> {
        let t = emb.nrows();
        let n = rec.n_items;
        let mut z = emb.clone();
        let mut carry = DVector::zeros(n + 1);
        carry[n] = 1.0;
        let heads = &self.layers[0];
        let mut results: Vec<HeadResult> = heads
            .iter()
            .map(|h| HeadResult {
                scores: DMatrix::zeros(t, t),
                pattern: (h.kind == HeadKind::Softmax).then(|| DMatrix::zeros(t, t)),
                output: DMatrix::zeros(t, self.config.d_model),
            })
            .collect();
        let mut keys: Vec<DMatrix<f64>> = heads.iter().map(|h| DMatrix::zeros(t, h.w_k.nrows())).collect();
        let mut vals: Vec<DMatrix<f64>> = heads.iter().map(|h| DMatrix::zeros(t, h.w_v.nrows())).collect();
        for k in 0..t {
            for a in 0..=n {
                z[(k, rec.prev + a)] += carry[a];
                writes[(k, rec.prev + a)] += carry[a];
            }
            let zk = z.row(k).transpose();
            let mut exp = DVector::zeros(n + 1);
            for (hi, h) in heads.iter().enumerate() {
                keys[hi].set_row(k, &(&h.w_k * &zk).transpose());
                vals[hi].set_row(k, &(&h.w_v * &zk).transpose());
                let q = &h.w_q * &zk;
                let mut s: Vec<f64> = (0..=k).map(|j| keys[hi].row(j).transpose().dot(&q)).collect();
                let r = &mut results[hi];
                if h.kind == HeadKind::Softmax {
                    let scale = (h.w_q.nrows() as f64).sqrt();
                    s.iter_mut().for_each(|x| *x /= scale);
                }
                for (j, &sj) in s.iter().enumerate() {
                    r.scores[(k, j)] = sj;
                }
                let w: Vec<f64> = match h.kind {
                    HeadKind::Softmax => {
                        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let e: Vec<f64> = s.iter().map(|x| (x - max).exp()).collect();
                        let zsum: f64 = e.iter().sum();
                        let p: Vec<f64> = e.iter().map(|x| x / zsum).collect();
                        let pat = r.pattern.as_mut().unwrap();
                        for (j, &pj) in p.iter().enumerate() {
                            pat[(k, j)] = pj;
                        }
                        p
                    }
                    HeadKind::Linear => s,
                };
                let mut mixed = DVector::zeros(h.w_v.nrows());
                for (j, wj) in w.iter().enumerate() {
                    mixed += vals[hi].row(j).transpose() * *wj;
                }
                let out = &h.w_o * mixed;
                r.output.set_row(k, &out.transpose());
                let id = HeadId::new(0, hi);
                let contributed = match self.ablated.get(&id) {
                    None => out,
                    Some(AblationFill::Zero) => DVector::zeros(self.config.d_model),
                    Some(AblationFill::Mean(m)) => m.clone(),
                };
                for a in 0..=n {
                    exp[a] += contributed[rec.exp + a];
                }
            }
            let phase: f64 = (0..n).map(|i| z[(k, rec.f_s + i)]).sum();
            let beta = phase * rec.beta_enc + (1.0 - phase) * rec.beta_rec;
            let mut t_in = exp * rec.gamma_ft;
            for i in 0..n {
                t_in[i] += z[(k, rec.f_s + i)] + (1.0 - rec.gamma_ft) * z[(k, rec.f_r + i)];
            }
            let norm = t_in.norm();
            if norm == 0.0 {
                return Err(Error::Degenerate(format!(
                    "position {k}: context input is zero (token outside the item subspaces?)"
                )));
            }
            t_in /= norm;
            let c = carry.dot(&t_in);
            let disc = 1.0 + beta * beta * (c * c - 1.0);
            if disc < 0.0 {
                return Err(Error::Numerical(format!("negative discriminant {disc} at position {k}")));
            }
            let rho = disc.sqrt() - beta * c;
            carry = carry * rho + t_in * beta;
            for a in 0..=n {
                writes[(k, rec.ctx + a)] += carry[a];
            }
        }
        Ok(results)
    }

    /// A copy of the model with `heads` replaced by `fill` (zero-ablation for
    /// [`AblationFill::Zero`]).
    pub fn ablate(&self, heads: &[HeadId]) -> Result<Self> {
        self.ablate_with(heads.iter().map(|&h| (h, AblationFill::Zero)))
    }

    pub fn ablate_with(&self, fills: impl IntoIterator<Item = (HeadId, AblationFill)>) -> Result<Self> {
        let mut out = self.clone();
        for (id, fill) in fills {
            self.head(id)?;
            if let AblationFill::Mean(m) = &fill {
                if m.len() != self.config.d_model {
                    return Err(Error::Dimension {
                        expected: self.config.d_model,
                        got: m.len(),
                    });
                }
            }
            out.ablated.insert(id, fill);
        }
        Ok(out)
    }

    /// Mean output of every head over every position of `reference`, in the
    /// unablated model.
    pub fn mean_head_outputs(&self, reference: &[TokenSequence]) -> Result<BTreeMap<HeadId, DVector<f64>>> {
        if reference.is_empty() {
            return Err(Error::Precondition("mean ablation needs reference sequences".into()));
        }
        let mut clean = self.clone();
        clean.ablated.clear();
        let mut sums: BTreeMap<HeadId, DVector<f64>> = self
            .head_ids()
            .into_iter()
            .map(|id| (id, DVector::zeros(self.config.d_model)))
            .collect();
        let mut rows = 0usize;
        for seq in reference {
            let pass = clean.forward(seq)?;
            rows += seq.len();
            for (id, s) in sums.iter_mut() {
                for r in pass.head_outputs[id.layer][id.head].row_iter() {
                    *s += r.transpose();
                }
            }
        }
        sums.values_mut().for_each(|s| *s /= rows as f64);
        Ok(sums)
    }

    /// Mean-ablated copy: each listed head writes its mean output over
    /// `reference` (see [`ToyModel::mean_head_outputs`]).
    pub fn ablate_mean(&self, heads: &[HeadId], reference: &[TokenSequence]) -> Result<Self> {
        for &id in heads {
            self.head(id)?;
        }
        let means = self.mean_head_outputs(reference)?;
        self.ablate_with(heads.iter().map(|id| (*id, AblationFill::Mean(means[id].clone()))))
    }

    pub fn ablate_mode(&self, heads: &[HeadId], mode: AblationMode, reference: &[TokenSequence]) -> Result<Self> {
        match mode {
            AblationMode::Zero => self.ablate(heads),
            AblationMode::Mean => self.ablate_mean(heads, reference),
        }
    }
}
