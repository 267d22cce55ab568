//! Exact dynamic programs over an enumerated MDP: trajectory counts, soft
//! values, the GSQL policy, partition function, marginals, backward
//! policies, flow-induced forward policies and entropies.
//!
//! Everything is carried in log space. One pass in (reverse) topological
//! order solves each recursion because state indices are topologically
//! sorted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::logspace::{entropy_from_log_probs, logsumexp, logsumexp_iter};
use crate::mdp::{for_each_trajectory, EnumeratedMdp, MdpError, StateId, Trajectory};

/// Structural identities (normalization, conservation) hold to this tolerance.
pub const STRUCTURAL_TOL: f64 = 1e-12;
/// Derived real-valued identities hold to this tolerance.
pub const DERIVED_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("terminal state {0} has a non-finite log target")]
    NonFiniteTarget(StateId),
    #[error("the initial state carries no flow: no terminal has positive target")]
    ZeroFlow,
    #[error("operation needs a single initial state")]
    MultipleInitialStates,
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Per-state action log-probabilities `log pi(a|s)`, aligned with
/// [`EnumeratedMdp::children`]. Terminal states have empty rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardPolicy {
    #[serde(with = "crate::jsonf64::nested")]
    pub log_probs: Vec<Vec<f64>>,
}

/// Per-state parent log-probabilities `log q(s,a|s')`, aligned with
/// [`EnumeratedMdp::parents`]. Initial states have empty rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardPolicy {
    #[serde(with = "crate::jsonf64::nested")]
    pub log_probs: Vec<Vec<f64>>,
}

impl ForwardPolicy {
    /// Uniform over each state's action mask.
    pub fn uniform(mdp: &EnumeratedMdp) -> Self {
        Self {
            log_probs: mdp
                .state_ids()
                .map(|s| {
                    let k = mdp.children(s).len();
                    vec![-(k as f64).ln(); k]
                })
                .collect(),
        }
    }

    pub fn log_prob(&self, s: StateId, action: usize) -> f64 {
        self.log_probs[s.0][action]
    }

    /// `sum_t log pi(a_t|s_t)` along a trajectory.
    pub fn trajectory_log_prob(&self, traj: &Trajectory) -> f64 {
        traj.steps()
            .iter()
            .map(|st| self.log_probs[st.from.0][st.action.0])
            .sum()
    }

    /// Largest deviation from normalization over non-terminal states.
    pub fn normalization_error(&self) -> f64 {
        self.log_probs
            .iter()
            .filter(|row| !row.is_empty())
            .map(|row| logsumexp(row).abs())
            .fold(0.0, f64::max)
    }
}

impl BackwardPolicy {
    pub fn log_prob(&self, child: StateId, slot: usize) -> f64 {
        self.log_probs[child.0][slot]
    }

    /// `sum_t log q(s_t,a_t|s_{t+1})` along a trajectory.
    pub fn trajectory_log_prob(&self, mdp: &EnumeratedMdp, traj: &Trajectory) -> f64 {
        traj.steps()
            .iter()
            .map(|st| self.log_probs[st.to.0][mdp.parent_slot(st.from, st.action)])
            .sum()
    }

    pub fn normalization_error(&self) -> f64 {
        self.log_probs
            .iter()
            .filter(|row| !row.is_empty())
            .map(|row| logsumexp(row).abs())
            .fold(0.0, f64::max)
    }
}

/// `l = log n`: `l(s0) = 0` and `l(s') = logsumexp` of `l` over the parent
/// list of `s'` (parallel edges count separately). Every initial-role state
/// gets `l = 0`.
pub fn count_paths(mdp: &EnumeratedMdp) -> Vec<f64> {
    let mut l = vec![f64::NEG_INFINITY; mdp.num_states()];
    for s in mdp.state_ids() {
        l[s.0] = if mdp.is_initial(s) {
            0.0
        } else {
            logsumexp_iter(mdp.parents(s).iter().map(|&(p, _)| l[p.0]))
        };
    }
    l
}

/// Solution of the undiscounted soft Bellman equation at temperature one.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftSolution {
    pub v: Vec<f64>,
    /// `Q(s, a)` aligned with children.
    pub q: Vec<Vec<f64>>,
    pub policy: ForwardPolicy,
}

/// One reverse-topological sweep of the soft Bellman equation:
/// `V(t) = R_T(t)`, `Q(s,a) = R(s,a) + V(T(s,a))`, `V(s) = logsumexp_a Q(s,a)`,
/// `log pi(a|s) = Q(s,a) - V(s)`. States whose every action has value `-inf`
/// get a uniform policy.
pub fn soft_value_iteration(
    mdp: &EnumeratedMdp,
    step_reward: &[Vec<f64>],
    terminal_reward: &[f64],
) -> SoftSolution {
    let n = mdp.num_states();
    let mut v = vec![f64::NEG_INFINITY; n];
    let mut q = vec![Vec::new(); n];
    let mut log_probs = vec![Vec::new(); n];
    for s in mdp.state_ids().rev() {
        if mdp.is_terminal(s) {
            v[s.0] = terminal_reward[s.0];
            continue;
        }
        let qs: Vec<f64> = mdp
            .children(s)
            .iter()
            .zip(&step_reward[s.0])
            .map(|(&(_, c), &r)| r + v[c.0])
            .collect();
        let vs = logsumexp(&qs);
        log_probs[s.0] = if vs == f64::NEG_INFINITY {
            vec![-(qs.len() as f64).ln(); qs.len()]
        } else {
            qs.iter().map(|&x| x - vs).collect()
        };
        v[s.0] = vs;
        q[s.0] = qs;
    }
    SoftSolution {
        v,
        q,
        policy: ForwardPolicy { log_probs },
    }
}

/// All-zero table aligned with the children lists.
pub fn zero_step_rewards(mdp: &EnumeratedMdp) -> Vec<Vec<f64>> {
    mdp.state_ids()
        .map(|s| vec![0.0; mdp.children(s).len()])
        .collect()
}

fn require_finite_targets(mdp: &EnumeratedMdp) -> Result<(), ExactError> {
    match mdp.terminals().find(|&t| !mdp.log_target(t).is_finite()) {
        Some(t) => Err(ExactError::NonFiniteTarget(t)),
        None => Ok(()),
    }
}

/// Soft Q-learning solution with zero step rewards and terminal reward
/// `log p~(t) - l(t)`.
pub fn gsql_solution(mdp: &EnumeratedMdp, l: &[f64]) -> Result<SoftSolution, ExactError> {
    require_finite_targets(mdp)?;
    let terminal_reward: Vec<f64> = mdp
        .state_ids()
        .map(|s| {
            if mdp.is_terminal(s) {
                mdp.log_target(s) - l[s.0]
            } else {
                0.0
            }
        })
        .collect();
    Ok(soft_value_iteration(
        mdp,
        &zero_step_rewards(mdp),
        &terminal_reward,
    ))
}

/// The GSQL policy; it reaches each terminal with probability `p~(t)/Z`.
pub fn gsql_policy(mdp: &EnumeratedMdp, l: &[f64]) -> Result<ForwardPolicy, ExactError> {
    Ok(gsql_solution(mdp, l)?.policy)
}

/// `(logsumexp_t log p~(t), V(s0))` with `V` the GSQL soft value.
pub fn log_partition(mdp: &EnumeratedMdp, l: &[f64]) -> Result<(f64, f64), ExactError> {
    if !mdp.has_single_initial() {
        return Err(ExactError::MultipleInitialStates);
    }
    let direct = logsumexp_iter(mdp.terminals().map(|t| mdp.log_target(t)));
    let value = gsql_solution(mdp, l)?.v[mdp.initial().0];
    Ok((direct, value))
}

/// Probability of passing through each state: `mu(s0) = 1` and
/// `mu(s') = sum over parents of mu(s) pi(a|s)`.
pub fn marginals(mdp: &EnumeratedMdp, policy: &ForwardPolicy) -> Result<Vec<f64>, ExactError> {
    if !mdp.has_single_initial() {
        return Err(ExactError::MultipleInitialStates);
    }
    let mut mu = vec![0.0; mdp.num_states()];
    mu[mdp.initial().0] = 1.0;
    for s in mdp.state_ids() {
        if mu[s.0] == 0.0 {
            continue;
        }
        for (&(_, c), &lp) in mdp.children(s).iter().zip(&policy.log_probs[s.0]) {
            mu[c.0] += mu[s.0] * lp.exp();
        }
    }
    Ok(mu)
}

/// Terminal marginals as `(state, probability)` pairs in index order.
pub fn terminal_distribution(
    mdp: &EnumeratedMdp,
    policy: &ForwardPolicy,
) -> Result<Vec<(StateId, f64)>, ExactError> {
    let mu = marginals(mdp, policy)?;
    Ok(mdp.terminals().map(|t| (t, mu[t.0])).collect())
}

/// Normalized target `p(t) = p~(t) / Z` over terminals.
pub fn target_distribution(mdp: &EnumeratedMdp) -> Vec<(StateId, f64)> {
    let log_z = logsumexp_iter(mdp.terminals().map(|t| mdp.log_target(t)));
    mdp.terminals()
        .map(|t| (t, (mdp.log_target(t) - log_z).exp()))
        .collect()
}

/// Maximum-entropy backward policy `q(s,a|s') = n(s)/n(s')`.
pub fn backward_maxent(mdp: &EnumeratedMdp, l: &[f64]) -> BackwardPolicy {
    BackwardPolicy {
        log_probs: mdp
            .state_ids()
            .map(|s| {
                mdp.parents(s)
                    .iter()
                    .map(|&(p, _)| l[p.0] - l[s.0])
                    .collect()
            })
            .collect(),
    }
}

/// Uniform backward policy `q = 1/|Parent(s')|`.
pub fn backward_uniform(mdp: &EnumeratedMdp) -> BackwardPolicy {
    BackwardPolicy {
        log_probs: mdp
            .state_ids()
            .map(|s| {
                let k = mdp.parents(s).len();
                vec![-(k as f64).ln(); k]
            })
            .collect(),
    }
}

/// State flows and forward policy determined by a backward policy and the
/// target through detailed balance: `log F(t) = log p~(t)`,
/// `log F(s) = logsumexp_a [log q(s,a|s') + log F(s')]` and
/// `log pi(a|s) = log q(s,a|s') + log F(s') - log F(s)`.
///
/// States without flow keep `log F = -inf` and a uniform policy; the policy
/// of their parents already gives them probability zero. Fails with
/// [`ExactError::ZeroFlow`] when the initial state has no flow.
pub fn forward_from_backward(
    mdp: &EnumeratedMdp,
    q: &BackwardPolicy,
) -> Result<(Vec<f64>, ForwardPolicy), ExactError> {
    let n = mdp.num_states();
    let mut log_f = vec![f64::NEG_INFINITY; n];
    let mut log_probs = vec![Vec::new(); n];
    for s in mdp.state_ids().rev() {
        if mdp.is_terminal(s) {
            log_f[s.0] = mdp.log_target(s);
            continue;
        }
        let terms: Vec<f64> = mdp
            .children(s)
            .iter()
            .map(|&(a, c)| q.log_probs[c.0][mdp.parent_slot(s, a)] + log_f[c.0])
            .collect();
        let fs = logsumexp(&terms);
        log_probs[s.0] = if fs == f64::NEG_INFINITY {
            vec![-(terms.len() as f64).ln(); terms.len()]
        } else {
            terms.iter().map(|&t| t - fs).collect()
        };
        log_f[s.0] = fs;
    }
    if mdp
        .initials()
        .iter()
        .any(|s| log_f[s.0] == f64::NEG_INFINITY)
    {
        return Err(ExactError::ZeroFlow);
    }
    Ok((log_f, ForwardPolicy { log_probs }))
}

/// `sum_s mu(s) H(pi(.|s))` over non-terminal states.
pub fn flow_entropy(mdp: &EnumeratedMdp, policy: &ForwardPolicy, mu: &[f64]) -> f64 {
    mdp.state_ids()
        .filter(|&s| !mdp.is_terminal(s) && mu[s.0] > 0.0)
        .map(|s| mu[s.0] * entropy_from_log_probs(&policy.log_probs[s.0]))
        .sum()
}

/// Entropy of the trajectory distribution by enumerating every trajectory.
pub fn trajectory_entropy_bruteforce(
    mdp: &EnumeratedMdp,
    policy: &ForwardPolicy,
    budget: usize,
) -> Result<f64, ExactError> {
    if !mdp.has_single_initial() {
        return Err(ExactError::MultipleInitialStates);
    }
    let mut h = 0.0;
    for_each_trajectory(mdp, budget, |traj| {
        let lp = policy.trajectory_log_prob(traj);
        if lp.is_finite() {
            h -= lp.exp() * lp;
        }
    })?;
    Ok(h)
}

/// Entropy of the normalized target.
pub fn target_entropy(mdp: &EnumeratedMdp) -> f64 {
    -target_distribution(mdp)
        .iter()
        .filter(|&&(_, p)| p > 0.0)
        .map(|&(_, p)| p * p.ln())
        .sum::<f64>()
}

/// Largest trajectory entropy of any policy that samples terminals from the
/// target: `H(p) + sum_t p(t) l(t)`.
pub fn max_entropy_bound(mdp: &EnumeratedMdp, l: &[f64]) -> f64 {
    let expected_l: f64 = target_distribution(mdp)
        .iter()
        .filter(|&&(_, p)| p > 0.0)
        .map(|&(t, p)| p * l[t.0])
        .sum();
    target_entropy(mdp) + expected_l
}

/// Exact per-state tables of one MDP.
///
/// `mu` and `log_f` are those of the maximum-entropy GFN (equivalently the
/// GSQL policy), so `log_f = l + v` and `log_f(s0) = log_z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTables {
    pub l: Vec<f64>,
    pub v: Vec<f64>,
    pub mu: Vec<f64>,
    pub log_f: Vec<f64>,
    pub log_z: f64,
}

impl ExactTables {
    pub fn solve(mdp: &EnumeratedMdp) -> Result<Self, ExactError> {
        let l = count_paths(mdp);
        let sol = gsql_solution(mdp, &l)?;
        let mu = marginals(mdp, &sol.policy)?;
        let (log_f, _) = forward_from_backward(mdp, &backward_maxent(mdp, &l))?;
        let log_z = log_f[mdp.initial().0];
        Ok(Self {
            l,
            v: sol.v,
            mu,
            log_f,
            log_z,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tables serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[derive(Serialize, Deserialize)]
struct StateRow {
    #[serde(with = "crate::jsonf64")]
    l: f64,
    #[serde(rename = "V", with = "crate::jsonf64")]
    v: f64,
    #[serde(with = "crate::jsonf64")]
    mu: f64,
    #[serde(rename = "logF", with = "crate::jsonf64")]
    log_f: f64,
}

#[derive(Serialize, Deserialize)]
struct TablesDoc {
    #[serde(rename = "logZ", with = "crate::jsonf64")]
    log_z: f64,
    states: BTreeMap<usize, StateRow>,
}

impl Serialize for ExactTables {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let states = (0..self.l.len())
            .map(|i| {
                let row = StateRow {
                    l: self.l[i],
                    v: self.v[i],
                    mu: self.mu[i],
                    log_f: self.log_f[i],
                };
                (i, row)
            })
            .collect();
        TablesDoc {
            log_z: self.log_z,
            states,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExactTables {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = TablesDoc::deserialize(d)?;
        if doc.states.keys().enumerate().any(|(i, &k)| i != k) {
            return Err(serde::de::Error::custom("state indices must be 0..n"));
        }
        let rows: Vec<StateRow> = doc.states.into_values().collect();
        Ok(Self {
            l: rows.iter().map(|r| r.l).collect(),
            v: rows.iter().map(|r| r.v).collect(),
            mu: rows.iter().map(|r| r.mu).collect(),
            log_f: rows.iter().map(|r| r.log_f).collect(),
            log_z: doc.log_z,
        })
    }
}
