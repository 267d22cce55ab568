use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::adam::Adam;
use super::loss::{loss_and_grad, LossStats};
use super::model::{ema_update, BackwardKind, PolicyModel};
use super::{NObjective, TrainConfig, TrainError};
use crate::exact::count_paths;
use crate::exact::{flow_entropy, marginals, max_entropy_bound};
use crate::mdp::{ActionId, EnumeratedMdp, StateId, Trajectory};
use crate::metrics::{kl_terminal, mode_count, n_mse, EvalReport, KlDirection, Weighting};

/// A trajectory together with its log-probability under the behavior policy
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTrajectory {
    pub trajectory: Trajectory,
    pub behavior_log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBatch {
    pub trajectories: Vec<SampledTrajectory>,
}

impl RolloutBatch {
    pub fn terminals(&self) -> impl Iterator<Item = StateId> + '_ {
        self.trajectories.iter().map(|t| t.trajectory.end())
    }
}

// Behavior probabilities (1 - eps) pi + eps / k for every state.
fn behavior_table(mdp: &EnumeratedMdp, model: &PolicyModel, eps: f64) -> Vec<Vec<f64>> {
    mdp.state_ids()
        .map(|s| {
            let k = mdp.children(s).len() as f64;
            model
                .forward_probs(s)
                .into_iter()
                .map(|p| (1.0 - eps) * p + eps / k)
                .collect()
        })
        .collect()
}

fn roll_out<R: Rng>(mdp: &EnumeratedMdp, table: &[Vec<f64>], rng: &mut R) -> SampledTrajectory {
    let mut traj = Trajectory::new(mdp.initial());
    let mut log_prob = 0.0;
    let mut s = mdp.initial();
    while !mdp.is_terminal(s) {
        let probs = &table[s.0];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = probs.len() - 1;
        for (a, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = a;
                break;
            }
        }
        log_prob += probs[pick].ln();
        let next = mdp.child(s, ActionId(pick));
        traj.push(ActionId(pick), next);
        s = next;
    }
    SampledTrajectory {
        trajectory: traj,
        behavior_log_prob: log_prob,
    }
}

/// One trajectory from the initial state under the epsilon-uniform mixture of
/// the model's forward policy. The stop action takes part in the mixture.
pub fn sample_trajectory<R: Rng>(
    mdp: &EnumeratedMdp,
    model: &PolicyModel,
    eps: f64,
    rng: &mut R,
) -> SampledTrajectory {
    roll_out(mdp, &behavior_table(mdp, model, eps), rng)
}

/// `count` trajectories; trajectory `first_index + i` draws from its own
/// ChaCha stream of `seed`, so the batch does not depend on `threads`.
pub fn sample_batch(
    mdp: &EnumeratedMdp,
    model: &PolicyModel,
    eps: f64,
    count: usize,
    seed: u64,
    first_index: u64,
    threads: usize,
) -> RolloutBatch {
    let table = behavior_table(mdp, model, eps);
    let draw = |i: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(first_index + i as u64);
        roll_out(mdp, &table, &mut rng)
    };
    let threads = threads.max(1).min(count.max(1));
    let trajectories = if threads == 1 {
        (0..count).map(draw).collect()
    } else {
        let chunk = count.div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let draw = &draw;
                    scope.spawn(move || {
                        (t * chunk..((t + 1) * chunk).min(count))
                            .map(draw)
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("sampling thread panicked"))
                .collect()
        })
    };
    RolloutBatch { trajectories }
}

/// One Adam step on the batch loss.
pub fn train_step(
    model: &mut PolicyModel,
    optimizer: &mut Adam,
    batch: &RolloutBatch,
    mdp: &EnumeratedMdp,
    cfg: &TrainConfig,
    exact_l: Option<&[f64]>,
) -> Result<LossStats, TrainError> {
    let (stats, grads) = loss_and_grad(model, &batch.trajectories, mdp, cfg, exact_l)?;
    optimizer.update(model.params_mut(), &grads, cfg.learning_rate)?;
    model.pin();
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub step: usize,
    pub trajectories: usize,
    pub kl_forward: f64,
    pub kl_reverse: f64,
    pub entropy: f64,
    pub max_entropy_bound: f64,
    pub policy_loss: f64,
    pub n_loss: f64,
    pub n_mse: f64,
    pub modes_found: usize,
}

impl MetricsRow {
    pub const HEADER: &'static str =
        "step,trajectories,kl_forward,kl_reverse,entropy,max_entropy_bound,policy_loss,n_loss,n_mse,modes_found";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.trajectories,
            self.kl_forward,
            self.kl_reverse,
            self.entropy,
            self.max_entropy_bound,
            self.policy_loss,
            self.n_loss,
            self.n_mse,
            self.modes_found
        )
    }

    pub fn to_csv(rows: &[MetricsRow]) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters updated by the optimizer; the evaluated model.
    pub model: PolicyModel,
    /// Exponential moving average used to sample trajectories.
    pub sampling_model: PolicyModel,
    pub metrics: Vec<MetricsRow>,
    pub trajectories_sampled: usize,
    pub visited_terminals: BTreeSet<StateId>,
}

/// Exact evaluation of a trained model against `p~^beta`.
pub fn evaluate_model(
    mdp: &EnumeratedMdp,
    model: &PolicyModel,
    reward_exponent: f64,
    thresholds: &[f64],
) -> Result<EvalReport, TrainError> {
    let target = mdp.with_reward_exponent(reward_exponent);
    Ok(EvalReport::evaluate(
        &target,
        &model.forward_policy(),
        Some(model.l_hat()),
        thresholds,
    )?)
}

fn default_threshold(mdp: &EnumeratedMdp) -> f64 {
    mdp.terminals()
        .map(|t| mdp.log_target(t))
        .fold(f64::NEG_INFINITY, f64::max)
        .exp()
}

/// Trains a fresh model initialized from `cfg.seed`.
pub fn run_training(mdp: &EnumeratedMdp, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let l = count_paths(mdp);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    let mut model = PolicyModel::random(mdp, cfg.init_scale, &mut rng);
    if cfg.backward == BackwardKind::MaxentLearned && cfg.n_objective == NObjective::None {
        model.l_hat_mut().copy_from_slice(&l);
        model.pin();
    }
    run_training_from(mdp, cfg, model)
}

/// Trains starting from `model`. Metrics are recorded every `eval_every`
/// steps and after the last step; `steps = 0` records nothing.
pub fn run_training_from(
    mdp: &EnumeratedMdp,
    cfg: &TrainConfig,
    model: PolicyModel,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let l = count_paths(mdp);
    let eval_mdp = mdp.with_reward_exponent(cfg.reward_exponent);
    let threshold = cfg.mode_threshold.unwrap_or_else(|| default_threshold(mdp));
    let mut model = model;
    model.pin();
    let mut sampling = model.clone();
    let mut optimizer = Adam::new(model.num_params());
    let mut visited = BTreeSet::new();
    let mut metrics = Vec::new();
    let mut sampled = 0usize;
    for step in 0..cfg.steps {
        let batch = sample_batch(
            mdp,
            &sampling,
            cfg.epsilon_uniform,
            cfg.batch_size,
            cfg.seed,
            sampled as u64,
            cfg.threads,
        );
        sampled += cfg.batch_size;
        visited.extend(batch.terminals());
        let stats = train_step(&mut model, &mut optimizer, &batch, mdp, cfg, Some(&l))?;
        ema_update(&mut sampling, &model, cfg.ema_decay);
        let done = step + 1;
        if done % cfg.eval_every == 0 || done == cfg.steps {
            let policy = model.forward_policy();
            let mu = marginals(&eval_mdp, &policy)?;
            metrics.push(MetricsRow {
                step: done,
                trajectories: sampled,
                kl_forward: kl_terminal(&eval_mdp, &policy, KlDirection::Forward)?,
                kl_reverse: kl_terminal(&eval_mdp, &policy, KlDirection::Reverse)?,
                entropy: flow_entropy(&eval_mdp, &policy, &mu),
                max_entropy_bound: max_entropy_bound(&eval_mdp, &l),
                policy_loss: stats.policy_loss,
                n_loss: stats.n_loss,
                n_mse: n_mse(model.l_hat(), &l, Weighting::Uniform),
                modes_found: mode_count(visited.iter().copied(), mdp.log_targets(), &[threshold])
                    [0],
            });
        }
    }
    Ok(TrainOutcome {
        model,
        sampling_model: sampling,
        metrics,
        trajectories_sampled: sampled,
        visited_terminals: visited,
    })
}
