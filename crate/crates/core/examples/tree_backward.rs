//! Tree building: the maximum-entropy backward policy weights parents by their
//! trajectory counts, unlike the uniform one.

use maxent_gfn::envs::TreeBuildEnv;
use maxent_gfn::exact::{backward_maxent, backward_uniform, count_paths};
use maxent_gfn::mdp::{enumerate, DEFAULT_MAX_STATES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mdp = enumerate(&TreeBuildEnv::new(5, 5, true), DEFAULT_MAX_STATES)?;
    let l = count_paths(&mdp);
    let qm = backward_maxent(&mdp, &l);
    let qu = backward_uniform(&mdp);
    // the state whose parents have the most uneven counts
    let spread = |s: maxent_gfn::mdp::StateId| {
        let ls = mdp.parents(s).iter().map(|&(p, _)| l[p.0]);
        ls.clone().fold(f64::MIN, f64::max) - ls.fold(f64::MAX, f64::min)
    };
    let s = mdp
        .state_ids()
        .filter(|&s| mdp.parents(s).len() > 1)
        .max_by(|&a, &b| spread(a).total_cmp(&spread(b)))
        .ok_or("no state with several parents")?;
    println!(
        "tree {} with n = {}",
        String::from_utf8_lossy(mdp.encoding(s)),
        l[s.0].exp().round()
    );
    for (slot, &(p, _)) in mdp.parents(s).iter().enumerate() {
        println!(
            "  parent {:<16} n = {:>3}  q_maxent = {:.4}  q_uniform = {:.4}",
            String::from_utf8_lossy(mdp.encoding(p)),
            l[p.0].exp().round(),
            qm.log_prob(s, slot).exp(),
            qu.log_prob(s, slot).exp()
        );
    }
    Ok(())
}
