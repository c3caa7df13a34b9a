use nalgebra::{DMatrix, DVector};

use super::context::{update_context, ItemEmbedding, TemporalContext};
use super::params::CmrParams;
use super::softmax_scaled;
use crate::error::{Error, Result};

/// Associative memories and the current context of one study list.
///
/// `m_tf` is maintained as the transpose of `m_ft_exp`; both start at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState {
    n_items: usize,
    m_ft_pre: DMatrix<f64>,
    m_ft_exp: DMatrix<f64>,
    m_tf: DMatrix<f64>,
    context: TemporalContext,
    step: usize,
    studied: Vec<usize>,
}

impl MemoryState {
    /// Fresh state with the identity pre-experimental map.
    pub fn new(n_items: usize) -> Self {
        Self::with_pre_experimental(n_items, DMatrix::identity(n_items + 1, n_items + 1))
            .expect("identity has the right shape")
    }

    pub fn with_pre_experimental(n_items: usize, m_ft_pre: DMatrix<f64>) -> Result<Self> {
        let dim = n_items + 1;
        if m_ft_pre.nrows() != dim || m_ft_pre.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: m_ft_pre.nrows().max(m_ft_pre.ncols()),
            });
        }
        Ok(Self {
            n_items,
            m_ft_pre,
            m_ft_exp: DMatrix::zeros(dim, dim),
            m_tf: DMatrix::zeros(dim, dim),
            context: TemporalContext::initial(n_items),
            step: 0,
            studied: Vec::new(),
        })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn m_ft_pre(&self) -> &DMatrix<f64> {
        &self.m_ft_pre
    }

    pub fn m_ft_exp(&self) -> &DMatrix<f64> {
        &self.m_ft_exp
    }

    pub fn m_tf(&self) -> &DMatrix<f64> {
        &self.m_tf
    }

    pub fn context(&self) -> &TemporalContext {
        &self.context
    }

    pub fn set_context(&mut self, context: TemporalContext) -> Result<()> {
        self.check_dim(context.dim())?;
        self.context = context;
        Ok(())
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Item indices in study order.
    pub fn studied(&self) -> &[usize] {
        &self.studied
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.n_items + 1 {
            return Err(Error::Dimension {
                expected: self.n_items + 1,
                got,
            });
        }
        Ok(())
    }

    /// Study one item: associate it with the current context, then drift the
    /// context towards its pre-experimental input.
    pub fn present(&mut self, item: ItemEmbedding, beta_enc: f64) -> Result<()> {
        self.check_dim(item.dim())?;
        if self.studied.contains(&item.index()) {
            return Err(Error::InvalidParameter(format!(
                "item {} presented twice; study items must be distinct",
                item.index()
            )));
        }
        let j = item.index();
        let prev = self.context.as_vector();
        // M_FT_exp += t_{j-1} f_j^T and M_TF += f_j t_{j-1}^T touch one
        // column and one row respectively.
        for r in 0..prev.len() {
            self.m_ft_exp[(r, j)] += prev[r];
            self.m_tf[(j, r)] += prev[r];
        }
        let t_in = self.m_ft_pre.column(j).into_owned();
        self.context = update_context(&self.context, &t_in, beta_enc)?;
        self.step += 1;
        self.studied.push(j);
        Ok(())
    }

    /// Input context retrieved by `item`:
    /// `((1 - gamma) M_FT_pre + gamma M_FT_exp) f`.
    pub fn retrieval_input(&self, item: ItemEmbedding, gamma_ft: f64) -> Result<DVector<f64>> {
        self.check_dim(item.dim())?;
        if !(0.0..=1.0).contains(&gamma_ft) {
            return Err(Error::InvalidParameter(format!("gamma_ft = {gamma_ft} outside [0, 1]")));
        }
        let j = item.index();
        Ok(self.m_ft_pre.column(j) * (1.0 - gamma_ft) + self.m_ft_exp.column(j) * gamma_ft)
    }

    /// Reinstate context after recalling `item`, drifting with `beta_rec`.
    pub fn retrieve(&mut self, item: ItemEmbedding, params: &CmrParams) -> Result<()> {
        let t_in = self.retrieval_input(item, params.gamma_ft())?;
        self.context = update_context(&self.context, &t_in, params.beta_rec())?;
        Ok(())
    }

    /// Retrieval strengths `<f_j, M_TF t>` for every studied item, in study order.
    pub fn retrieval_strengths(&self, t: &TemporalContext) -> Result<Vec<f64>> {
        self.check_dim(t.dim())?;
        let t = t.as_vector();
        Ok(self
            .studied
            .iter()
            .map(|&j| self.m_tf.row(j).transpose().dot(t))
            .collect())
    }

    /// Softmax over studied items of the retrieval strengths scaled by `inv_temp`.
    pub fn recall_distribution(&self, t: &TemporalContext, inv_temp: f64) -> Result<Vec<f64>> {
        if self.studied.is_empty() {
            return Err(Error::Precondition("no studied items to recall".into()));
        }
        Ok(softmax_scaled(&self.retrieval_strengths(t)?, inv_temp))
    }

    /// Distribution for the next recall given the current context.
    pub fn next_recall_distribution(&self, inv_temp: f64) -> Result<Vec<f64>> {
        self.recall_distribution(&self.context, inv_temp)
    }
}

/// Encode a study list with `beta_enc`. Returns the final state and the
/// contexts `t_0 ..= t_n` (`t_0` is the dummy-unit start context).
pub fn encode_list(items: &[ItemEmbedding], params: &CmrParams) -> Result<(MemoryState, Vec<TemporalContext>)> {
    let Some(first) = items.first() else {
        return Err(Error::Precondition("empty study list".into()));
    };
    let n_items = first.dim() - 1;
    let mut state = MemoryState::new(n_items);
    let mut contexts = Vec::with_capacity(items.len() + 1);
    contexts.push(state.context().clone());
    for &item in items {
        state.present(item, params.beta_enc())?;
        contexts.push(state.context().clone());
    }
    Ok((state, contexts))
}

/// The list `0, 1, .., n-1` over an `n`-item vocabulary.
pub(crate) fn identity_list(n: usize) -> Vec<ItemEmbedding> {
    (0..n).map(|i| ItemEmbedding::new(i, n).expect("in range")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(beta: f64, gamma: f64) -> CmrParams {
        CmrParams::new(beta, beta, gamma, 1.0).unwrap()
    }

    #[test]
    fn worked_five_item_example() {
        let beta = 0.7;
        let rho = (1.0f64 - beta * beta).sqrt();
        let (state, ctx) = encode_list(&identity_list(5), &params(beta, 0.0)).unwrap();
        let t5 = ctx[5].as_vector();
        let expect = [
            rho.powi(4) * beta,
            rho.powi(3) * beta,
            rho.powi(2) * beta,
            rho * beta,
            beta,
            rho.powi(5),
        ];
        for i in 0..6 {
            assert!((t5[i] - expect[i]).abs() < 1e-12, "t5[{i}]");
        }
        assert_eq!(state.step(), 5);
        assert_eq!(state.m_tf(), &state.m_ft_exp().transpose());
    }

    #[test]
    fn duplicate_item_rejected() {
        let items = vec![ItemEmbedding::new(0, 3).unwrap(), ItemEmbedding::new(0, 3).unwrap()];
        assert!(encode_list(&items, &params(0.5, 0.0)).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut state = MemoryState::new(3);
        let wrong = ItemEmbedding::new(0, 4).unwrap();
        assert!(matches!(state.present(wrong, 0.5), Err(Error::Dimension { .. })));
        assert!(MemoryState::with_pre_experimental(3, DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn unpresented_items_have_no_experimental_association() {
        let list = identity_list(6);
        let mut state = MemoryState::new(6);
        for (j, &item) in list.iter().enumerate() {
            for later in &list[j..] {
                assert_eq!(state.m_ft_exp() * later.to_vector(), DVector::zeros(7));
            }
            state.present(item, 0.4).unwrap();
            assert_eq!(state.m_tf(), &state.m_ft_exp().transpose());
        }
    }

    #[test]
    fn retrieval_input_mixture() {
        let beta = 0.7;
        let (state, ctx) = encode_list(&identity_list(5), &params(beta, 0.0)).unwrap();
        let f3 = ItemEmbedding::new(2, 5).unwrap();
        assert_eq!(state.retrieval_input(f3, 0.0).unwrap(), f3.to_vector());
        assert_eq!(&state.retrieval_input(f3, 1.0).unwrap(), ctx[2].as_vector());
        let half = state.retrieval_input(f3, 0.5).unwrap();
        let expect = (f3.to_vector() + ctx[2].as_vector()) * 0.5;
        assert!((half - expect).norm() < 1e-15);
    }

    #[test]
    fn zero_inverse_temperature_is_uniform() {
        let (state, _) = encode_list(&identity_list(7), &params(0.5, 0.3)).unwrap();
        let p = state.next_recall_distribution(0.0).unwrap();
        assert!(p.iter().all(|&x| (x - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn chaining_recalls_the_successor() {
        let p = CmrParams::new(1.0, 1.0, 0.0, 100.0).unwrap();
        let (mut state, _) = encode_list(&identity_list(5), &p).unwrap();
        state.retrieve(ItemEmbedding::new(1, 5).unwrap(), &p).unwrap();
        let dist = state.next_recall_distribution(p.inv_temp()).unwrap();
        assert!((dist[2] - 1.0).abs() < 1e-12);
        let total: f64 = dist.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recall_distribution_matches_dense_oracle() {
        // t = rho * t_2 + beta * f_3 with beta_rec = 0.7, gamma = 0, written out
        // directly rather than through the recurrence.
        let beta_enc = 0.55;
        let beta_rec = 0.7;
        let inv_temp = 3.0;
        let n = 5;
        let p = CmrParams::new(beta_enc, beta_rec, 0.0, inv_temp).unwrap();
        let (state, ctx) = encode_list(&identity_list(n), &p).unwrap();

        let rho_e = (1.0f64 - beta_enc * beta_enc).sqrt();
        let mut m_tf = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut t_prev = DVector::<f64>::zeros(n + 1);
        t_prev[n] = 1.0;
        let mut t2 = None;
        for j in 0..n {
            for r in 0..=n {
                m_tf[(j, r)] += t_prev[r];
            }
            let mut f = DVector::zeros(n + 1);
            f[j] = 1.0;
            t_prev = t_prev * rho_e + f * beta_enc;
            if j == 1 {
                t2 = Some(t_prev.clone());
            }
        }
        let t2 = t2.unwrap();
        assert!((&t2 - ctx[2].as_vector()).norm() < 1e-14);
        let mut f3 = DVector::zeros(n + 1);
        f3[2] = 1.0;
        let rho_r = (1.0f64 - beta_rec * beta_rec).sqrt();
        let cue = &t2 * rho_r + f3.clone() * beta_rec;
        let strengths = &m_tf * &cue;
        let max = (0..n).map(|j| strengths[j] * inv_temp).fold(f64::MIN, f64::max);
        let z: f64 = (0..n).map(|j| (strengths[j] * inv_temp - max).exp()).sum();
        let oracle: Vec<f64> = (0..n).map(|j| (strengths[j] * inv_temp - max).exp() / z).collect();

        let t = update_context(&ctx[2], &f3, beta_rec).unwrap();
        let got = state.recall_distribution(&t, inv_temp).unwrap();
        for j in 0..n {
            assert!((got[j] - oracle[j]).abs() < 1e-10);
        }
    }
}
