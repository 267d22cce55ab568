//! Tabular learners for GFN objectives and generative soft Q-learning, with an
//! optional learned model of the trajectory counts `l = log n`.

mod adam;
mod loss;
mod model;
mod train;

use serde::{Deserialize, Serialize};

use crate::exact::ExactError;
use crate::metrics::MetricsError;
use crate::objectives::HuberParams;

pub use adam::Adam;
pub use loss::{loss_and_grad, LossStats};
pub use model::{ema_update, BackwardKind, PolicyModel};
pub use train::{
    evaluate_model, run_training, run_training_from, sample_batch, sample_trajectory, train_step,
    MetricsRow, RolloutBatch, SampledTrajectory, TrainOutcome,
};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("non-finite gradient at parameter {0}")]
    NonFiniteGradient(usize),
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("the maximum-entropy backward needs trajectory counts: supply exact l or enable an n-objective")]
    BackwardRequiresL,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Policy objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Trajectory balance.
    Tb,
    /// Detailed balance.
    Db,
    /// Sub-trajectory balance.
    Stb,
    /// Flow matching.
    Fm,
    /// Generative soft Q-learning through trajectory-level path consistency.
    TrajectoryPcl,
}

/// Objective for the learned `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NObjective {
    /// Soft Bellman residual on the inverted MDP at every visited state.
    Bellman,
    /// One residual per trajectory: the sum of Bellman residuals along it.
    Trajectory,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: Objective,
    pub backward: BackwardKind,
    pub n_objective: NObjective,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epsilon_uniform: f64,
    pub reward_exponent: f64,
    pub lambda_stb: f64,
    pub huber: HuberParams,
    /// Number of gradient steps.
    pub steps: usize,
    pub seed: u64,
    pub ema_decay: f64,
    /// Evaluate every this many steps (and after the last one).
    pub eval_every: usize,
    pub threads: usize,
    /// Half-width of the uniform parameter initialization.
    pub init_scale: f64,
    /// Mode threshold on `p~`; the largest target when absent.
    pub mode_threshold: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Tb,
            backward: BackwardKind::MaxentLearned,
            n_objective: NObjective::Bellman,
            learning_rate: 5e-4,
            batch_size: 256,
            epsilon_uniform: 1e-3,
            reward_exponent: 1.0,
            lambda_stb: 1.0,
            huber: HuberParams::default(),
            steps: 1_000,
            seed: 0,
            ema_decay: 0.95,
            eval_every: 100,
            threads: 1,
            init_scale: 0.0,
            mode_threshold: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon_uniform) {
            return bad("epsilon_uniform must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return bad("ema_decay must lie in [0, 1)");
        }
        if !(self.lambda_stb > 0.0 && self.lambda_stb.is_finite()) {
            return bad("lambda_stb must be positive");
        }
        if !(self.huber.delta > 0.0 && self.huber.beta > 0.0) {
            return bad("huber delta and beta must be positive");
        }
        if !self.reward_exponent.is_finite() {
            return bad("reward_exponent must be finite");
        }
        if self.threads == 0 {
            return bad("threads must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        if self.init_scale < 0.0 {
            return bad("init_scale must be non-negative");
        }
        if self.objective == Objective::TrajectoryPcl
            && !matches!(
                self.backward,
                BackwardKind::MaxentKnown | BackwardKind::MaxentLearned
            )
        {
            return bad("trajectory-pcl needs backward maxent-known or maxent-learned");
        }
        Ok(())
    }
}
