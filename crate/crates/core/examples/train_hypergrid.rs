//! Trains a tabular GFN with a learned maximum-entropy backward on the 8x8
//! hypergrid and prints the metric series.
//!
//! `cargo run --release --example train_hypergrid -- [steps] [lr] [batch] [seed]`

use maxent_gfn::envs::HypergridEnv;
use maxent_gfn::learner::{
    run_training, BackwardKind, MetricsRow, NObjective, Objective, TrainConfig,
};
use maxent_gfn::mdp::{enumerate, DEFAULT_MAX_STATES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let mdp = enumerate(&HypergridEnv::new(2, 8), DEFAULT_MAX_STATES)?;
    let cfg = TrainConfig {
        objective: Objective::Tb,
        backward: BackwardKind::MaxentLearned,
        n_objective: NObjective::Bellman,
        steps: arg(0, "6000").parse()?,
        learning_rate: arg(1, "0.01").parse()?,
        batch_size: arg(2, "32").parse()?,
        seed: arg(3, "0").parse()?,
        eval_every: 500,
        ..TrainConfig::default()
    };
    let out = run_training(&mdp, &cfg)?;
    print!("{}", MetricsRow::to_csv(&out.metrics));
    Ok(())
}
