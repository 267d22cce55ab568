//! Batch losses with hand-derived gradients.
//!
//! Every residual is pushed through the Huber loss; its derivative becomes a
//! coefficient that is propagated onto the log-quantities the residual is
//! made of (`log pi`, `log q`, `log F`, `l`, `log Z`) and from there onto the
//! flat parameter vector.

use super::model::{BackwardKind, PolicyModel};
use super::{NObjective, Objective, SampledTrajectory, TrainConfig, TrainError};
use crate::logspace::{log_softmax, logsumexp_iter};
use crate::mdp::{EnumeratedMdp, StateId, Step};
use crate::objectives::{cross_cumsum, huber, huber_grad};

/// Mean Huber losses of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct LossStats {
    pub policy_loss: f64,
    pub n_loss: f64,
    pub total: f64,
}

struct Ctx<'a> {
    model: &'a PolicyModel,
    mdp: &'a EnumeratedMdp,
    cfg: &'a TrainConfig,
    exact_l: Option<&'a [f64]>,
    backward: BackwardKind,
    fwd_lp: Vec<Vec<f64>>,
    bwd_lp: Vec<Vec<f64>>,
    // logsumexp of l_hat over the parents of each state
    parent_lse: Vec<f64>,
    // the same for the supplied exact l
    known_lse: Vec<f64>,
    grad: Vec<f64>,
}

impl<'a> Ctx<'a> {
    fn new(
        model: &'a PolicyModel,
        mdp: &'a EnumeratedMdp,
        cfg: &'a TrainConfig,
        exact_l: Option<&'a [f64]>,
    ) -> Self {
        let fwd_lp = mdp
            .state_ids()
            .map(|s| model.forward_log_probs(s))
            .collect();
        // a learned l with no objective of its own stays at the supplied exact l
        let backward = match (cfg.backward, cfg.n_objective) {
            (BackwardKind::MaxentLearned, NObjective::None) => BackwardKind::MaxentKnown,
            (b, _) => b,
        };
        let bwd_lp = if backward == BackwardKind::Free {
            mdp.state_ids()
                .map(|s| log_softmax(model.backward_logits(s)))
                .collect()
        } else {
            Vec::new()
        };
        let mut ctx = Self {
            model,
            mdp,
            cfg,
            exact_l,
            backward,
            fwd_lp,
            bwd_lp,
            parent_lse: Vec::new(),
            known_lse: Vec::new(),
            grad: vec![0.0; model.num_params()],
        };
        ctx.parent_lse = mdp
            .state_ids()
            .map(|s| logsumexp_iter(mdp.parents(s).iter().map(|&(p, _)| ctx.l_val(p))))
            .collect();
        if let Some(l) = exact_l {
            ctx.known_lse = mdp
                .state_ids()
                .map(|s| logsumexp_iter(mdp.parents(s).iter().map(|&(p, _)| l[p.0])))
                .collect();
        }
        ctx
    }

    fn target(&self, t: StateId) -> f64 {
        self.cfg.reward_exponent * self.mdp.log_target(t)
    }

    fn log_pi(&self, st: &Step) -> f64 {
        self.fwd_lp[st.from.0][st.action.0]
    }

    fn add_log_pi(&mut self, st: &Step, c: f64) {
        let k = self.fwd_lp[st.from.0].len();
        for b in 0..k {
            let p = self.fwd_lp[st.from.0][b].exp();
            let delta = if b == st.action.0 { 1.0 } else { 0.0 };
            self.grad[self.model.fwd_index(st.from, b)] += c * (delta - p);
        }
    }

    fn l_val(&self, s: StateId) -> f64 {
        if self.mdp.is_initial(s) {
            0.0
        } else {
            self.model.l_hat()[s.0]
        }
    }

    fn add_l(&mut self, s: StateId, c: f64) {
        if !self.mdp.is_initial(s) {
            self.grad[self.model.l_index(s)] += c;
        }
    }

    /// Gradient of `logsumexp over parents(child) of l` scaled by `c`.
    fn add_parent_lse(&mut self, child: StateId, c: f64) {
        let lse = self.parent_lse[child.0];
        for &(p, _) in self.mdp.parents(child) {
            let w = (self.l_val(p) - lse).exp();
            self.add_l(p, c * w);
        }
    }

    fn exact_l(&self) -> Result<&'a [f64], TrainError> {
        self.exact_l.ok_or(TrainError::BackwardRequiresL)
    }

    fn log_q(&self, st: &Step) -> Result<f64, TrainError> {
        let slot = self.mdp.parent_slot(st.from, st.action);
        Ok(match self.backward {
            BackwardKind::Uniform => -(self.mdp.parents(st.to).len() as f64).ln(),
            BackwardKind::MaxentKnown => {
                // normalized over parents, so an inexact l still gives a distribution
                let l = self.exact_l()?;
                l[st.from.0] - self.known_lse[st.to.0]
            }
            BackwardKind::MaxentLearned => self.l_val(st.from) - self.parent_lse[st.to.0],
            BackwardKind::Free => self.bwd_lp[st.to.0][slot],
        })
    }

    fn add_log_q(&mut self, st: &Step, c: f64) {
        match self.backward {
            BackwardKind::Uniform | BackwardKind::MaxentKnown => {}
            BackwardKind::MaxentLearned => {
                self.add_l(st.from, c);
                self.add_parent_lse(st.to, -c);
            }
            BackwardKind::Free => {
                let slot = self.mdp.parent_slot(st.from, st.action);
                let k = self.bwd_lp[st.to.0].len();
                for j in 0..k {
                    let q = self.bwd_lp[st.to.0][j].exp();
                    let delta = if j == slot { 1.0 } else { 0.0 };
                    self.grad[self.model.bwd_index(st.to, j)] += c * (delta - q);
                }
            }
        }
    }

    /// Learned state log-flow; terminal flows are clamped to the target.
    fn log_f(&self, s: StateId) -> f64 {
        if self.mdp.is_terminal(s) {
            self.target(s)
        } else {
            self.model.log_f_hat()[s.0]
        }
    }

    fn add_log_f(&mut self, s: StateId, c: f64) {
        if !self.mdp.is_terminal(s) {
            self.grad[self.model.log_f_index(s)] += c;
        }
    }

    fn add_log_z(&mut self, c: f64) {
        self.grad[self.model.log_z_index()] += c;
    }

    /// `l` used as the GSQL terminal correction.
    fn terminal_l(&self, t: StateId) -> Result<f64, TrainError> {
        match self.backward {
            BackwardKind::MaxentKnown => Ok(self.exact_l()?[t.0]),
            BackwardKind::MaxentLearned => Ok(self.l_val(t)),
            _ => Err(TrainError::InvalidConfig(
                "trajectory-PCL needs a maximum-entropy backward (known or learned)".into(),
            )),
        }
    }
}

fn huber_pair(x: f64, cfg: &TrainConfig) -> (f64, f64) {
    (huber(x, cfg.huber), huber_grad(x, cfg.huber))
}

fn policy_loss(ctx: &mut Ctx<'_>, batch: &[SampledTrajectory]) -> Result<f64, TrainError> {
    let cfg = ctx.cfg;
    let b = batch.len() as f64;
    let mut loss = 0.0;
    match cfg.objective {
        Objective::Tb => {
            for tr in batch {
                let steps = tr.trajectory.steps();
                let mut r = ctx.model.log_z_hat() - ctx.target(tr.trajectory.end());
                for st in steps {
                    r += ctx.log_pi(st) - ctx.log_q(st)?;
                }
                let (h, dh) = huber_pair(r, cfg);
                loss += h / b;
                let c = dh / b;
                ctx.add_log_z(c);
                for st in steps {
                    ctx.add_log_pi(st, c);
                    ctx.add_log_q(st, -c);
                }
            }
        }
        Objective::TrajectoryPcl => {
            for tr in batch {
                let end = tr.trajectory.end();
                let steps = tr.trajectory.steps();
                let v_end = ctx.target(end) - ctx.terminal_l(end)?;
                let r = ctx.model.log_z_hat() + steps.iter().map(|st| ctx.log_pi(st)).sum::<f64>()
                    - v_end;
                let (h, dh) = huber_pair(r, cfg);
                loss += h / b;
                let c = dh / b;
                ctx.add_log_z(c);
                for st in steps {
                    ctx.add_log_pi(st, c);
                }
                if ctx.backward == BackwardKind::MaxentLearned {
                    ctx.add_l(end, c);
                }
            }
        }
        Objective::Db => {
            let count: usize = batch.iter().map(|t| t.trajectory.len()).sum();
            if count == 0 {
                return Ok(0.0);
            }
            let n = count as f64;
            for tr in batch {
                for st in tr.trajectory.steps() {
                    let r = ctx.log_f(st.from) + ctx.log_pi(st) - ctx.log_q(st)? - ctx.log_f(st.to);
                    let (h, dh) = huber_pair(r, cfg);
                    loss += h / n;
                    let c = dh / n;
                    ctx.add_log_f(st.from, c);
                    ctx.add_log_pi(st, c);
                    ctx.add_log_q(st, -c);
                    ctx.add_log_f(st.to, -c);
                }
            }
        }
        Objective::Stb => {
            for tr in batch {
                let steps = tr.trajectory.steps();
                let t = steps.len();
                if t == 0 {
                    continue;
                }
                let states: Vec<StateId> = tr.trajectory.states().collect();
                let v: Vec<f64> = states.iter().map(|&s| ctx.log_f(s)).collect();
                let mut x = Vec::with_capacity(t);
                for st in steps {
                    x.push(ctx.log_pi(st) - ctx.log_q(st)?);
                }
                let resid = cross_cumsum(&v, &x);
                let mut total_w = 0.0;
                for i in 0..t {
                    for j in i..t {
                        total_w += cfg.lambda_stb.powi((j - i + 1) as i32);
                    }
                }
                // per-step coefficient via a difference array over [i, j]
                let mut diff = vec![0.0; t + 1];
                let mut v_coef = vec![0.0; t + 1];
                for (i, j, r) in resid.iter() {
                    let w = cfg.lambda_stb.powi((j - i + 1) as i32) / total_w;
                    let (h, dh) = huber_pair(r, cfg);
                    loss += w * h / b;
                    let c = w * dh / b;
                    v_coef[i] += c;
                    v_coef[j + 1] -= c;
                    diff[i] += c;
                    diff[j + 1] -= c;
                }
                let mut run = 0.0;
                for (k, st) in steps.iter().enumerate() {
                    run += diff[k];
                    ctx.add_log_pi(st, run);
                    ctx.add_log_q(st, -run);
                }
                for (k, &s) in states.iter().enumerate() {
                    ctx.add_log_f(s, v_coef[k]);
                }
            }
        }
        Objective::Fm => {
            let count: usize = batch.iter().map(|t| t.trajectory.len() + 1).sum();
            let n = count as f64;
            for tr in batch {
                let s0 = tr.trajectory.start();
                let r0 = ctx.log_f(s0) - ctx.model.log_z_hat();
                let (h, dh) = huber_pair(r0, cfg);
                loss += h / n;
                ctx.add_log_f(s0, dh / n);
                ctx.add_log_z(-dh / n);
                for st in tr.trajectory.steps() {
                    let s = st.to;
                    let inflow: Vec<(Step, f64)> = ctx
                        .mdp
                        .parents(s)
                        .iter()
                        .map(|&(p, a)| {
                            let e = Step {
                                from: p,
                                action: a,
                                to: s,
                            };
                            (e, ctx.log_f(p) + ctx.log_pi(&e))
                        })
                        .collect();
                    let lse_in = logsumexp_iter(inflow.iter().map(|&(_, x)| x));
                    // with F(s,a) = F(s) pi(a|s) the outflow of a non-terminal state is F(s)
                    let r = ctx.log_f(s) - lse_in;
                    let (h, dh) = huber_pair(r, cfg);
                    loss += h / n;
                    let c = dh / n;
                    ctx.add_log_f(s, c);
                    for (e, x) in inflow {
                        let w = (x - lse_in).exp();
                        ctx.add_log_f(e.from, -c * w);
                        ctx.add_log_pi(&e, -c * w);
                    }
                }
            }
        }
    }
    Ok(loss)
}

fn n_loss(ctx: &mut Ctx<'_>, batch: &[SampledTrajectory]) -> f64 {
    let cfg = ctx.cfg;
    let mut loss = 0.0;
    match cfg.n_objective {
        NObjective::None => {}
        NObjective::Bellman => {
            let count: usize = batch.iter().map(|t| t.trajectory.len()).sum();
            if count == 0 {
                return 0.0;
            }
            let n = count as f64;
            for tr in batch {
                for st in tr.trajectory.steps() {
                    let s = st.to;
                    let r = ctx.l_val(s) - ctx.parent_lse[s.0];
                    let (h, dh) = huber_pair(r, cfg);
                    loss += h / n;
                    ctx.add_l(s, dh / n);
                    ctx.add_parent_lse(s, -dh / n);
                }
            }
        }
        NObjective::Trajectory => {
            let b = batch.len() as f64;
            for tr in batch {
                let end = tr.trajectory.end();
                let mut r = ctx.l_val(end);
                for st in tr.trajectory.steps() {
                    r += ctx.l_val(st.from) - ctx.parent_lse[st.to.0];
                }
                let (h, dh) = huber_pair(r, cfg);
                loss += h / b;
                let c = dh / b;
                ctx.add_l(end, c);
                for st in tr.trajectory.steps() {
                    ctx.add_l(st.from, c);
                    ctx.add_parent_lse(st.to, -c);
                }
            }
        }
    }
    loss
}

/// Loss statistics and the gradient of the total loss with respect to the
/// model's flat parameter vector.
pub fn loss_and_grad(
    model: &PolicyModel,
    batch: &[SampledTrajectory],
    mdp: &EnumeratedMdp,
    cfg: &TrainConfig,
    exact_l: Option<&[f64]>,
) -> Result<(LossStats, Vec<f64>), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    if cfg.backward == BackwardKind::MaxentLearned
        && cfg.n_objective == NObjective::None
        && exact_l.is_none()
    {
        return Err(TrainError::BackwardRequiresL);
    }
    let mut ctx = Ctx::new(model, mdp, cfg, exact_l);
    let policy_loss = policy_loss(&mut ctx, batch)?;
    let n_loss = n_loss(&mut ctx, batch);
    let total = policy_loss + n_loss;
    if !total.is_finite() {
        return Err(TrainError::NonFiniteLoss);
    }
    Ok((
        LossStats {
            policy_loss,
            n_loss,
            total,
        },
        ctx.grad,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::SimpleDagEnv;
    use crate::logspace::logsumexp;
    use crate::mdp::{enumerate, DEFAULT_MAX_STATES};

    #[test]
    fn backward_is_normalized_for_any_counts() {
        let mdp = enumerate(&SimpleDagEnv::default(), DEFAULT_MAX_STATES).unwrap();
        let model = PolicyModel::zeros(&mdp);
        let l = [0.0, 1.3, -0.4, 2.0];
        for backward in [
            BackwardKind::Uniform,
            BackwardKind::MaxentKnown,
            BackwardKind::Free,
        ] {
            let cfg = TrainConfig {
                backward,
                n_objective: NObjective::None,
                ..TrainConfig::default()
            };
            let ctx = Ctx::new(&model, &mdp, &cfg, Some(&l));
            for s in mdp.state_ids().filter(|&s| !mdp.is_initial(s)) {
                let lq: Vec<f64> = mdp
                    .parents(s)
                    .iter()
                    .map(|&(p, a)| {
                        ctx.log_q(&Step {
                            from: p,
                            action: a,
                            to: s,
                        })
                        .unwrap()
                    })
                    .collect();
                assert!(logsumexp(&lq).abs() < 1e-12, "{backward:?} at {s}");
            }
        }
    }

    #[test]
    fn known_backward_needs_counts() {
        let mdp = enumerate(&SimpleDagEnv::default(), DEFAULT_MAX_STATES).unwrap();
        let model = PolicyModel::zeros(&mdp);
        let cfg = TrainConfig {
            backward: BackwardKind::MaxentKnown,
            n_objective: NObjective::None,
            ..TrainConfig::default()
        };
        let ctx = Ctx::new(&model, &mdp, &cfg, None);
        let e = mdp.edges().next().unwrap();
        assert_eq!(ctx.log_q(&e), Err(TrainError::BackwardRequiresL));
    }
}
