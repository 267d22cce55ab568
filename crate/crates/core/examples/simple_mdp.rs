//! Exact GFlowNets on the four-state DAG: the uniform and maximum-entropy
//! backward policies, the forward policies they induce and their entropies.

use maxent_gfn::envs::SimpleDagEnv;
use maxent_gfn::exact::{
    backward_maxent, backward_uniform, count_paths, flow_entropy, forward_from_backward, marginals,
    max_entropy_bound, BackwardPolicy,
};
use maxent_gfn::mdp::{enumerate, enumerate_trajectories, EnumeratedMdp, DEFAULT_MAX_STATES};

fn show(
    mdp: &EnumeratedMdp,
    name: &str,
    q: &BackwardPolicy,
) -> Result<(), Box<dyn std::error::Error>> {
    let (_, pi) = forward_from_backward(mdp, q)?;
    println!("{name} backward");
    for traj in enumerate_trajectories(mdp, 16)? {
        let path: Vec<String> = traj
            .states()
            .map(|s| String::from_utf8_lossy(mdp.encoding(s)).into_owned())
            .collect();
        println!(
            "  {:<16} p = {:.4}",
            path.join(" -> "),
            pi.trajectory_log_prob(&traj).exp()
        );
    }
    let mu = marginals(mdp, &pi)?;
    println!("  entropy {:.6}", flow_entropy(mdp, &pi, &mu));
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mdp = enumerate(&SimpleDagEnv::default(), DEFAULT_MAX_STATES)?;
    let l = count_paths(&mdp);
    show(&mdp, "uniform", &backward_uniform(&mdp))?;
    show(&mdp, "maximum-entropy", &backward_maxent(&mdp, &l))?;
    println!(
        "entropy bound {:.6} (ln 3 = {:.6})",
        max_entropy_bound(&mdp, &l),
        3f64.ln()
    );
    Ok(())
}
