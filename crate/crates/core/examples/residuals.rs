//! Residuals of the GFN objectives along one trajectory, at the exact
//! maximum-entropy solution and after perturbing the flows.

use maxent_gfn::envs::HypergridEnv;
use maxent_gfn::exact::{backward_maxent, count_paths, forward_from_backward, gsql_solution};
use maxent_gfn::mdp::{enumerate, enumerate_trajectories, DEFAULT_MAX_STATES};
use maxent_gfn::objectives::{
    cross_cumsum, pcl_residuals, stb_residuals, tb_residual, TrajectoryView,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mdp = enumerate(&HypergridEnv::new(2, 4), DEFAULT_MAX_STATES)?;
    let l = count_paths(&mdp);
    let q = backward_maxent(&mdp, &l);
    let (log_f, pi) = forward_from_backward(&mdp, &q)?;
    let traj = enumerate_trajectories(&mdp, 10_000)?.swap_remove(17);
    let steps = traj.steps();
    let mut view = TrajectoryView {
        log_pi: steps
            .iter()
            .map(|s| pi.log_prob(s.from, s.action.0))
            .collect(),
        log_q: steps
            .iter()
            .map(|s| q.log_prob(s.to, mdp.parent_slot(s.from, s.action)))
            .collect(),
        reward: vec![0.0; steps.len()],
        value: traj.states().map(|s| log_f[s.0]).collect(),
        l: traj.states().map(|s| l[s.0]).collect(),
        log_target: mdp.log_target(traj.end()),
        log_z: log_f[mdp.initial().0],
    };
    println!("trajectory of {} steps", traj.len());
    println!(
        "TB residual at the exact solution {:.2e}",
        tb_residual(&view)
    );
    view.log_z += 0.5;
    view.value[0] += 0.5;
    println!(
        "TB residual with log Z + 0.5       {:.2e}",
        tb_residual(&view)
    );
    let (stb, _) = stb_residuals(&view, &view.value, 0.9);
    let moved = stb.iter().filter(|(_, _, r)| r.abs() > 1e-12).count();
    println!(
        "sub-trajectories off balance: {moved} of {} (those starting at s0)",
        stb.len()
    );

    let sol = gsql_solution(&mdp, &l)?;
    view.value = traj.states().map(|s| sol.v[s.0]).collect();
    view.log_pi = steps
        .iter()
        .map(|s| sol.policy.log_prob(s.from, s.action.0))
        .collect();
    let worst = pcl_residuals(&view, 1.0, 1.0)
        .iter()
        .map(|(_, _, r)| r.abs())
        .fold(0.0, f64::max);
    println!("largest GSQL path-consistency residual {worst:.2e}");

    let tri = cross_cumsum(&[0.0, 1.0, 3.0], &[0.5, 0.25]);
    println!("cross_cumsum entries (i, j, value):");
    for (i, j, v) in tri.iter() {
        println!("  {i} {j} {v}");
    }
    Ok(())
}
