//! Exact and learned samplers proportional to an unnormalized target on the
//! terminal states of acyclic deterministic MDPs.

pub mod cli;
pub mod dagspec;
pub mod envs;
pub mod exact;
mod jsonf64;
pub mod learner;
pub mod logspace;
pub mod mdp;
pub mod metrics;
pub mod objectives;
