//! Trajectory counts `n(s)` by dynamic programming on several environments.

use maxent_gfn::envs::{BitVectorEnv, HypergridEnv, TreeBuildEnv, WordsEnv, WordsMode};
use maxent_gfn::exact::count_paths;
use maxent_gfn::mdp::{enumerate, EnumeratedMdp, DEFAULT_MAX_STATES};

fn terminal_counts(mdp: &EnumeratedMdp) -> (f64, f64) {
    let l = count_paths(mdp);
    let counts = mdp.terminals().map(|t| l[t.0].exp().round());
    counts.fold((f64::INFINITY, 0.0), |(lo, hi), n| (lo.min(n), hi.max(n)))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("words over {{a, b}}, letters added on either side");
    for n in 1..=10 {
        let mdp = enumerate(
            &WordsEnv::new(2, n, WordsMode::AppendEitherSide),
            DEFAULT_MAX_STATES,
        )?;
        println!("  N = {n:>2}: n(word) = {}", terminal_counts(&mdp).0);
    }
    let trees = enumerate(&TreeBuildEnv::new(4, 4, true), DEFAULT_MAX_STATES)?;
    let (lo, hi) = terminal_counts(&trees);
    println!("labeled trees with 4 nodes: n ranges over [{lo}, {hi}]");
    let bits = enumerate(&BitVectorEnv::new(5), DEFAULT_MAX_STATES)?;
    println!(
        "bit vectors of length 5: n = {} (5!)",
        terminal_counts(&bits).0
    );
    let grid = enumerate(&HypergridEnv::new(2, 64), DEFAULT_MAX_STATES)?;
    let l = count_paths(&grid);
    let top = grid.state_ids().map(|s| l[s.0]).fold(f64::MIN, f64::max);
    println!("64x64 grid: largest l = {top:.6} (ln C(126, 63))");
    Ok(())
}
