use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exact::{
    backward_maxent, backward_uniform, forward_from_backward, ExactError, ForwardPolicy,
};
use crate::logspace::{log_softmax, softmax};
use crate::mdp::{EnumeratedMdp, StateId};

/// Which backward policy a GFN objective pairs with the forward policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackwardKind {
    /// `q = 1 / |Parent(s')|`.
    Uniform,
    /// `q = n(s)/n(s')` from exact trajectory counts.
    MaxentKnown,
    /// `q = n(s)/n(s')` with `n` replaced by the model's learned `l`.
    MaxentLearned,
    /// Free softmax over parent logits.
    Free,
}

/// Tabular parameters stored in one flat vector: forward logits per state,
/// backward logits per state, `l` per state, `log F` per state and `log Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    params: Vec<f64>,
    fwd: Vec<usize>,
    bwd: Vec<usize>,
    l_at: usize,
    log_f_at: usize,
    log_z_at: usize,
    initials: Vec<StateId>,
}

impl PolicyModel {
    /// All-zero parameters: uniform forward and free-backward policies.
    pub fn zeros(mdp: &EnumeratedMdp) -> Self {
        let mut fwd = Vec::with_capacity(mdp.num_states() + 1);
        let mut at = 0;
        for s in mdp.state_ids() {
            fwd.push(at);
            at += mdp.children(s).len();
        }
        fwd.push(at);
        let mut bwd = Vec::with_capacity(mdp.num_states() + 1);
        for s in mdp.state_ids() {
            bwd.push(at);
            at += mdp.parents(s).len();
        }
        bwd.push(at);
        let n = mdp.num_states();
        let l_at = at;
        let log_f_at = l_at + n;
        let log_z_at = log_f_at + n;
        Self {
            params: vec![0.0; log_z_at + 1],
            fwd,
            bwd,
            l_at,
            log_f_at,
            log_z_at,
            initials: mdp.initials().to_vec(),
        }
    }

    /// Parameters drawn uniformly from `[-scale, scale]`, with `l(s0) = 0`.
    pub fn random<R: Rng>(mdp: &EnumeratedMdp, scale: f64, rng: &mut R) -> Self {
        let mut m = Self::zeros(mdp);
        if scale > 0.0 {
            for p in &mut m.params {
                *p = rng.random_range(-scale..=scale);
            }
        }
        m.pin();
        m
    }

    /// The exact fixed point of a GFN objective with the given backward
    /// policy: forward logits are the induced log-policy, `log F` and
    /// `log Z` the induced flows, `l` the exact counts. `mdp` must already
    /// carry the training target.
    pub fn from_exact(
        mdp: &EnumeratedMdp,
        l: &[f64],
        backward: BackwardKind,
    ) -> Result<Self, ExactError> {
        let q = match backward {
            BackwardKind::Uniform | BackwardKind::Free => backward_uniform(mdp),
            BackwardKind::MaxentKnown | BackwardKind::MaxentLearned => backward_maxent(mdp, l),
        };
        let (log_f, policy) = forward_from_backward(mdp, &q)?;
        let mut m = Self::zeros(mdp);
        for s in mdp.state_ids() {
            m.forward_logits_mut(s)
                .copy_from_slice(&policy.log_probs[s.0]);
            m.backward_logits_mut(s).copy_from_slice(&q.log_probs[s.0]);
            m.params[m.l_at + s.0] = l[s.0];
            m.params[m.log_f_at + s.0] = log_f[s.0];
        }
        m.params[m.log_z_at] = log_f[mdp.initial().0];
        m.pin();
        Ok(m)
    }

    pub(crate) fn pin(&mut self) {
        for s in self.initials.clone() {
            self.params[self.l_at + s.0] = 0.0;
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn num_states(&self) -> usize {
        self.fwd.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward_logits(&self, s: StateId) -> &[f64] {
        &self.params[self.fwd[s.0]..self.fwd[s.0 + 1]]
    }

    pub fn forward_logits_mut(&mut self, s: StateId) -> &mut [f64] {
        &mut self.params[self.fwd[s.0]..self.fwd[s.0 + 1]]
    }

    pub fn backward_logits(&self, s: StateId) -> &[f64] {
        &self.params[self.bwd[s.0]..self.bwd[s.0 + 1]]
    }

    pub fn backward_logits_mut(&mut self, s: StateId) -> &mut [f64] {
        &mut self.params[self.bwd[s.0]..self.bwd[s.0 + 1]]
    }

    pub fn forward_log_probs(&self, s: StateId) -> Vec<f64> {
        log_softmax(self.forward_logits(s))
    }

    pub fn forward_probs(&self, s: StateId) -> Vec<f64> {
        softmax(self.forward_logits(s))
    }

    pub fn forward_policy(&self) -> ForwardPolicy {
        ForwardPolicy {
            log_probs: (0..self.num_states())
                .map(|s| self.forward_log_probs(StateId(s)))
                .collect(),
        }
    }

    pub fn l_hat(&self) -> &[f64] {
        &self.params[self.l_at..self.log_f_at]
    }

    pub fn l_hat_mut(&mut self) -> &mut [f64] {
        &mut self.params[self.l_at..self.log_f_at]
    }

    pub fn log_f_hat(&self) -> &[f64] {
        &self.params[self.log_f_at..self.log_z_at]
    }

    pub fn log_z_hat(&self) -> f64 {
        self.params[self.log_z_at]
    }

    pub fn set_log_z_hat(&mut self, x: f64) {
        self.params[self.log_z_at] = x;
    }

    // flat-index helpers for gradient accumulation
    pub(crate) fn fwd_index(&self, s: StateId, a: usize) -> usize {
        self.fwd[s.0] + a
    }

    pub(crate) fn bwd_index(&self, s: StateId, slot: usize) -> usize {
        self.bwd[s.0] + slot
    }

    pub(crate) fn l_index(&self, s: StateId) -> usize {
        self.l_at + s.0
    }

    pub(crate) fn log_f_index(&self, s: StateId) -> usize {
        self.log_f_at + s.0
    }

    pub(crate) fn log_z_index(&self) -> usize {
        self.log_z_at
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("model serializes")
    }

    /// Restores a model saved with [`PolicyModel::to_json`] for the same MDP.
    pub fn from_json(mdp: &EnumeratedMdp, text: &str) -> Result<Self, String> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut m = Self::zeros(mdp);
        let n = mdp.num_states();
        if doc.forward_logits.len() != n
            || doc.backward_logits.len() != n
            || doc.l_hat.len() != n
            || doc.log_f_hat.len() != n
        {
            return Err(format!("model does not match an MDP with {n} states"));
        }
        for s in mdp.state_ids() {
            let (f, b) = (&doc.forward_logits[s.0], &doc.backward_logits[s.0]);
            if f.len() != mdp.children(s).len() || b.len() != mdp.parents(s).len() {
                return Err(format!("row length mismatch at state {s}"));
            }
            m.forward_logits_mut(s).copy_from_slice(f);
            m.backward_logits_mut(s).copy_from_slice(b);
        }
        m.l_hat_mut().copy_from_slice(&doc.l_hat);
        let (lf, lz) = (m.log_f_at, m.log_z_at);
        m.params[lf..lz].copy_from_slice(&doc.log_f_hat);
        m.params[lz] = doc.log_z_hat;
        Ok(m)
    }

    fn to_doc(&self) -> ModelDoc {
        let n = self.num_states();
        ModelDoc {
            forward_logits: (0..n)
                .map(|s| self.forward_logits(StateId(s)).to_vec())
                .collect(),
            backward_logits: (0..n)
                .map(|s| self.backward_logits(StateId(s)).to_vec())
                .collect(),
            l_hat: self.l_hat().to_vec(),
            log_f_hat: self.log_f_hat().to_vec(),
            log_z_hat: self.log_z_hat(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    #[serde(with = "crate::jsonf64::nested")]
    forward_logits: Vec<Vec<f64>>,
    #[serde(with = "crate::jsonf64::nested")]
    backward_logits: Vec<Vec<f64>>,
    #[serde(with = "crate::jsonf64::vec")]
    l_hat: Vec<f64>,
    #[serde(with = "crate::jsonf64::vec")]
    log_f_hat: Vec<f64>,
    #[serde(with = "crate::jsonf64")]
    log_z_hat: f64,
}

/// `sampling <- decay * sampling + (1 - decay) * train`, parameter-wise.
pub fn ema_update(sampling: &mut PolicyModel, train: &PolicyModel, decay: f64) {
    assert_eq!(
        sampling.params.len(),
        train.params.len(),
        "models must be congruent"
    );
    for (s, &t) in sampling.params.iter_mut().zip(&train.params) {
        *s = decay * *s + (1.0 - decay) * t;
    }
}
