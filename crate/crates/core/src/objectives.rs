//! Residuals of the GFlowNet and soft-RL constraint families, written in log
//! space as left-hand side minus right-hand side, plus the Huber loss.

use crate::logspace::logsumexp;
use crate::mdp::{EnumeratedMdp, Trajectory};

/// Per-trajectory quantities every residual is built from. A trajectory of
/// `T` steps visits `T + 1` states.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryView {
    pub log_pi: Vec<f64>,
    pub log_q: Vec<f64>,
    pub reward: Vec<f64>,
    /// Soft value (or state log-flow) per visited state.
    pub value: Vec<f64>,
    pub l: Vec<f64>,
    pub log_target: f64,
    pub log_z: f64,
}

impl TrajectoryView {
    pub fn len(&self) -> usize {
        self.log_pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_pi.is_empty()
    }

    pub fn is_consistent(&self) -> bool {
        let t = self.log_pi.len();
        self.log_q.len() == t
            && self.reward.len() == t
            && self.value.len() == t + 1
            && self.l.len() == t + 1
    }
}

/// Upper-triangular table indexed by the first and last step of a
/// sub-trajectory: entry `(i, j)` with `i <= j` covers steps `i..=j`, i.e. the
/// states `s_i .. s_{j+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTriangle {
    steps: usize,
    data: Vec<f64>,
}

impl StepTriangle {
    fn zeros(steps: usize) -> Self {
        Self {
            steps,
            data: vec![0.0; steps * (steps + 1) / 2],
        }
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        assert!(
            i <= j && j < self.steps,
            "({i}, {j}) outside a {}-step triangle",
            self.steps
        );
        // rows before i hold steps, steps-1, ... entries
        i * self.steps - i * (i.saturating_sub(1)) / 2 + (j - i)
    }

    /// Number of steps `T`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.offset(i, j)]
    }

    fn set(&mut self, i: usize, j: usize, x: f64) {
        let k = self.offset(i, j);
        self.data[k] = x;
    }

    /// Entry for the sub-trajectory from state `a` to state `b` (`a < b`).
    pub fn between_states(&self, a: usize, b: usize) -> f64 {
        self.get(a, b - 1)
    }

    /// `(i, j, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.steps).flat_map(move |i| (i..self.steps).map(move |j| (i, j, self.get(i, j))))
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Detailed balance: `log F(s) + log pi(a|s) - log q(s,a|s') - log F(s')`.
pub fn db_residual(log_f_s: f64, log_pi: f64, log_q: f64, log_f_next: f64) -> f64 {
    log_f_s + log_pi - log_q - log_f_next
}

/// Trajectory balance: `log Z + sum log pi - log p~(s_T) - sum log q`.
pub fn tb_residual(view: &TrajectoryView) -> f64 {
    view.log_z + view.log_pi.iter().sum::<f64>() - view.log_target - view.log_q.iter().sum::<f64>()
}

/// Flow matching at a state: `logsumexp({log p~(s)} + outflows) - logsumexp(inflows)`.
/// Pass `-inf` as the target of non-terminal states, and `[log Z]` as the
/// inflow of the initial state.
pub fn fm_residual(log_target_s: f64, out_log_flows: &[f64], in_log_flows: &[f64]) -> f64 {
    let mut out = Vec::with_capacity(out_log_flows.len() + 1);
    out.push(log_target_s);
    out.extend_from_slice(out_log_flows);
    logsumexp(&out) - logsumexp(in_log_flows)
}

/// `D[i][j] = v[i] - v[j+1] + sum_{t=i}^{j} x[t]` for `0 <= i <= j < T`, from a
/// single cumulative sum of `x`.
pub fn cross_cumsum(v: &[f64], x: &[f64]) -> StepTriangle {
    let t = x.len();
    assert_eq!(v.len(), t + 1, "v needs one more entry than x");
    let mut cum = Vec::with_capacity(t + 1);
    cum.push(0.0);
    let mut acc = 0.0;
    for &xi in x {
        acc += xi;
        cum.push(acc);
    }
    let mut d = StepTriangle::zeros(t);
    for i in 0..t {
        for j in i..t {
            d.set(i, j, v[i] - v[j + 1] + (cum[j + 1] - cum[i]));
        }
    }
    d
}

/// Sub-trajectory balance residuals and their weights. `log_f` holds the
/// state log-flows along the trajectory (its last entry is replaced by the
/// terminal log-target) and the weight of a sub-trajectory of `k` steps is
/// `lambda^k`, normalized to sum to one.
pub fn stb_residuals(
    view: &TrajectoryView,
    log_f: &[f64],
    lambda: f64,
) -> (StepTriangle, StepTriangle) {
    let t = view.len();
    let mut v = log_f.to_vec();
    assert_eq!(v.len(), t + 1);
    if let Some(last) = v.last_mut() {
        *last = view.log_target;
    }
    let x: Vec<f64> = view
        .log_pi
        .iter()
        .zip(&view.log_q)
        .map(|(p, q)| p - q)
        .collect();
    let residuals = cross_cumsum(&v, &x);
    let mut weights = StepTriangle::zeros(t);
    let mut total = 0.0;
    for i in 0..t {
        for j in i..t {
            let w = lambda.powi((j - i + 1) as i32);
            weights.set(i, j, w);
            total += w;
        }
    }
    for w in &mut weights.data {
        *w /= total;
    }
    (residuals, weights)
}

/// Path consistency residuals
/// `V(s_i) + sum_{t=i}^{j-1} gamma^(t-i) (tau log pi - R) - gamma^(j-i) V(s_j)`,
/// stored in a [`StepTriangle`] (use [`StepTriangle::between_states`]).
pub fn pcl_residuals(view: &TrajectoryView, tau: f64, gamma: f64) -> StepTriangle {
    let t = view.len();
    let x: Vec<f64> = view
        .log_pi
        .iter()
        .zip(&view.reward)
        .map(|(lp, r)| tau * lp - r)
        .collect();
    if gamma == 1.0 {
        return cross_cumsum(&view.value, &x);
    }
    let mut d = StepTriangle::zeros(t);
    for i in 0..t {
        let mut acc = view.value[i];
        let mut disc = 1.0;
        for (j, xj) in x.iter().enumerate().skip(i) {
            acc += disc * xj;
            disc *= gamma;
            d.set(i, j, acc - disc * view.value[j + 1]);
        }
    }
    d
}

/// Soft Bellman residual of `l` on the inverted MDP at a non-initial state:
/// `l(s') - logsumexp over parents of l(s)`.
pub fn n_bellman_residual(l_state: f64, parent_l: &[f64]) -> f64 {
    l_state - logsumexp(parent_l)
}

/// Backward log-probability induced by a model of `l`:
/// `log q_l(s,a|s') = l(s) - logsumexp over parents of s' of l`.
pub fn induced_log_q(
    mdp: &EnumeratedMdp,
    l_model: &[f64],
    child: crate::mdp::StateId,
    slot: usize,
) -> f64 {
    let parents = mdp.parents(child);
    let lse = crate::logspace::logsumexp_iter(parents.iter().map(|&(p, _)| l_model[p.0]));
    l_model[parents[slot].0 .0] - lse
}

/// `l(s_T) + sum_t log q_l(s_t,a_t|s_{t+1}) - l(s0)` with `l(s0)` pinned to 0.
/// It equals the sum of the Bellman residuals along the trajectory, so it
/// vanishes when `l_model` is the trajectory count.
pub fn n_trajectory_residual(mdp: &EnumeratedMdp, traj: &Trajectory, l_model: &[f64]) -> f64 {
    let back: f64 = traj
        .steps()
        .iter()
        .map(|st| induced_log_q(mdp, l_model, st.to, mdp.parent_slot(st.from, st.action)))
        .sum();
    let end = traj.end();
    let l_end = if mdp.is_initial(end) {
        0.0
    } else {
        l_model[end.0]
    };
    l_end + back
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HuberParams {
    pub delta: f64,
    pub beta: f64,
}

impl Default for HuberParams {
    fn default() -> Self {
        Self {
            delta: 0.25,
            beta: 1.0,
        }
    }
}

impl HuberParams {
    pub fn new(delta: f64, beta: f64) -> Self {
        assert!(
            delta > 0.0 && beta > 0.0,
            "Huber parameters must be positive"
        );
        Self { delta, beta }
    }
}

/// `0.5 x^2 / delta` for `|x| <= beta`, else `beta (|x| - 0.5 beta) / delta`.
pub fn huber(x: f64, p: HuberParams) -> f64 {
    let ax = x.abs();
    if ax <= p.beta {
        0.5 * x * x / p.delta
    } else {
        p.beta * (ax - 0.5 * p.beta) / p.delta
    }
}

/// Derivative of [`huber`]; bounded by `beta / delta`.
pub fn huber_grad(x: f64, p: HuberParams) -> f64 {
    if x.abs() <= p.beta {
        x / p.delta
    } else {
        p.beta * x.signum() / p.delta
    }
}
