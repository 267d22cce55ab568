//! Evaluation quantities: exact terminal KL, log-probability correlation,
//! mode counts, error of a learned `l`, and the combined [`EvalReport`].

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exact::{
    count_paths, flow_entropy, marginals, max_entropy_bound, target_distribution, ExactError,
    ForwardPolicy,
};
use crate::mdp::{EnumeratedMdp, StateId};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("distributions have mismatched support at state {0}")]
    SupportMismatch(StateId),
    #[error("correlation undefined: a sample has zero variance")]
    DegenerateVariance,
    #[error("need at least two distinct samples")]
    TooFewSamples,
    #[error(transparent)]
    Exact(#[from] ExactError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlDirection {
    /// `KL(mu_T || p)`.
    #[default]
    Forward,
    /// `KL(p || mu_T)`.
    Reverse,
}

fn kl(p: &[(StateId, f64)], q: &[(StateId, f64)]) -> Result<f64, MetricsError> {
    let mut total = 0.0;
    for (&(s, pi), &(_, qi)) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(MetricsError::SupportMismatch(s));
        }
        total += pi * (pi / qi).ln();
    }
    // rounding can leave tiny negatives
    Ok(total.max(0.0))
}

/// Exact KL divergence between the terminal marginal of `policy` and the
/// normalized target of `mdp`.
pub fn kl_terminal(
    mdp: &EnumeratedMdp,
    policy: &ForwardPolicy,
    direction: KlDirection,
) -> Result<f64, MetricsError> {
    let mu = marginals(mdp, policy)?;
    let model: Vec<(StateId, f64)> = mdp.terminals().map(|t| (t, mu[t.0])).collect();
    let target = target_distribution(mdp);
    match direction {
        KlDirection::Forward => kl(&model, &target),
        KlDirection::Reverse => kl(&target, &model),
    }
}

/// L1 distance between the terminal marginal and the normalized target.
pub fn l1_terminal(mdp: &EnumeratedMdp, policy: &ForwardPolicy) -> Result<f64, MetricsError> {
    let mu = marginals(mdp, policy)?;
    Ok(target_distribution(mdp)
        .iter()
        .map(|&(t, p)| (mu[t.0] - p).abs())
        .sum())
}

/// Pearson correlation between `policy_log_prob[t]` and `log_target[t]` over
/// the sample multiset.
pub fn pearson_logprob(
    samples: &[StateId],
    policy_log_prob: &[f64],
    log_target: &[f64],
) -> Result<f64, MetricsError> {
    let distinct: HashSet<StateId> = samples.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(MetricsError::TooFewSamples);
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| policy_log_prob[s.0]).collect();
    let ys: Vec<f64> = samples.iter().map(|s| log_target[s.0]).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let scale = sxx.max(syy);
    if sxx <= 1e-24 * scale.max(1.0) || syy <= 1e-24 * scale.max(1.0) {
        return Err(MetricsError::DegenerateVariance);
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// How terminal states are drawn for a correlation estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalSampling {
    /// Draw terminals in proportion to the target.
    Proportional,
    /// Draw terminals uniformly.
    Uniform,
}

pub fn sample_terminals<R: Rng>(
    mdp: &EnumeratedMdp,
    count: usize,
    scheme: TerminalSampling,
    rng: &mut R,
) -> Vec<StateId> {
    let dist = target_distribution(mdp);
    let weights: Vec<f64> = match scheme {
        TerminalSampling::Proportional => dist.iter().map(|&(_, p)| p).collect(),
        TerminalSampling::Uniform => vec![1.0 / dist.len() as f64; dist.len()],
    };
    (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (&(t, _), &w) in dist.iter().zip(&weights) {
                acc += w;
                if u < acc {
                    return t;
                }
            }
            dist.last().expect("at least one terminal").0
        })
        .collect()
}

/// Number of distinct visited terminals with `p~ >= threshold`, per threshold.
pub fn mode_count<I>(visited: I, log_target: &[f64], thresholds: &[f64]) -> Vec<usize>
where
    I: IntoIterator<Item = StateId>,
{
    let distinct: HashSet<StateId> = visited.into_iter().collect();
    thresholds
        .iter()
        .map(|&th| {
            let cut = th.ln() - 1e-12;
            distinct.iter().filter(|s| log_target[s.0] >= cut).count()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting<'a> {
    Uniform,
    /// Per-state non-negative weights, e.g. visit counts.
    Visits(&'a [f64]),
}

/// Weighted mean squared error between two `log n` tables.
pub fn n_mse(l_hat: &[f64], l_exact: &[f64], weighting: Weighting<'_>) -> f64 {
    assert_eq!(l_hat.len(), l_exact.len());
    let sq = l_hat.iter().zip(l_exact).map(|(a, b)| (a - b) * (a - b));
    match weighting {
        Weighting::Uniform => sq.sum::<f64>() / l_hat.len() as f64,
        Weighting::Visits(w) => {
            let total: f64 = w.iter().sum();
            sq.zip(w).map(|(e, w)| e * w).sum::<f64>() / total
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCount {
    pub threshold: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kl_forward: f64,
    pub kl_reverse: f64,
    pub l1: f64,
    pub entropy: f64,
    pub max_entropy_bound: f64,
    pub pearson: Option<f64>,
    pub n_mse: Option<f64>,
    pub modes: Vec<ModeCount>,
}

impl EvalReport {
    /// Exact evaluation of a forward policy. Mode counts treat every terminal
    /// with positive terminal probability as visited.
    pub fn evaluate(
        mdp: &EnumeratedMdp,
        policy: &ForwardPolicy,
        l_hat: Option<&[f64]>,
        thresholds: &[f64],
    ) -> Result<Self, MetricsError> {
        let l = count_paths(mdp);
        let mu = marginals(mdp, policy)?;
        let log_p: Vec<f64> = mu.iter().map(|m| m.ln()).collect();
        let terminals: Vec<StateId> = mdp.terminals().collect();
        let pearson = pearson_logprob(&terminals, &log_p, mdp.log_targets()).ok();
        let reached = mdp.terminals().filter(|t| mu[t.0] > 0.0);
        let counts = mode_count(reached, mdp.log_targets(), thresholds);
        Ok(Self {
            kl_forward: kl_terminal(mdp, policy, KlDirection::Forward)?,
            kl_reverse: kl_terminal(mdp, policy, KlDirection::Reverse)?,
            l1: l1_terminal(mdp, policy)?,
            entropy: flow_entropy(mdp, policy, &mu),
            max_entropy_bound: max_entropy_bound(mdp, &l),
            pearson,
            n_mse: l_hat.map(|lh| n_mse(lh, &l, Weighting::Uniform)),
            modes: thresholds
                .iter()
                .zip(counts)
                .map(|(&threshold, count)| ModeCount { threshold, count })
                .collect(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
