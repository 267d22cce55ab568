//! Exact tables for a hypergrid: partition function, entropies of the two
//! backward-induced GFNs and the maximum-entropy bound.
//!
//! `cargo run --example hypergrid_exact -- [dims] [side]`

use maxent_gfn::envs::HypergridEnv;
use maxent_gfn::exact::{
    backward_maxent, backward_uniform, flow_entropy, forward_from_backward, marginals,
    max_entropy_bound, target_entropy, ExactTables,
};
use maxent_gfn::mdp::{enumerate, DEFAULT_MAX_STATES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse())
        .collect::<Result<_, _>>()?;
    let (dims, side) = (
        args.first().copied().unwrap_or(2),
        args.get(1).copied().unwrap_or(8),
    );
    let mdp = enumerate(&HypergridEnv::new(dims, side), DEFAULT_MAX_STATES)?;
    let tables = ExactTables::solve(&mdp)?;
    println!(
        "states {}, terminals {}",
        mdp.num_states(),
        mdp.num_terminals()
    );
    println!(
        "log Z {:.6} (V(s0) = {:.6})",
        tables.log_z,
        tables.v[mdp.initial().0]
    );
    for (name, q) in [
        ("maxent", backward_maxent(&mdp, &tables.l)),
        ("uniform", backward_uniform(&mdp)),
    ] {
        let (_, pi) = forward_from_backward(&mdp, &q)?;
        let h = flow_entropy(&mdp, &pi, &marginals(&mdp, &pi)?);
        println!("entropy with {name} backward {h:.6}");
    }
    println!(
        "bound H(p) + E_p[l] {:.6}",
        max_entropy_bound(&mdp, &tables.l)
    );
    println!("target entropy H(p) {:.6}", target_entropy(&mdp));
    Ok(())
}
