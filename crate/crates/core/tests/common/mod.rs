//! Brute-force oracles and fixtures shared by the integration tests. Nothing
//! here calls the dynamic programs under test.

#![allow(dead_code)]

use std::collections::BTreeSet;

use maxent_gfn::dagspec::parse_dag;
use maxent_gfn::envs::{
    BitVectorEnv, HypergridEnv, SimpleDagEnv, TreeBuildEnv, WordsEnv, WordsMode,
};
use maxent_gfn::exact::ForwardPolicy;
use maxent_gfn::mdp::{
    enumerate, ActionId, EnumeratedMdp, StateId, Step, Trajectory, DEFAULT_MAX_STATES,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn simple() -> EnumeratedMdp {
    enumerate(&SimpleDagEnv::default(), DEFAULT_MAX_STATES).unwrap()
}

pub fn simple_with_target(p: f64) -> EnumeratedMdp {
    enumerate(&SimpleDagEnv::new(p), DEFAULT_MAX_STATES).unwrap()
}

pub fn grid(dims: usize, side: usize) -> EnumeratedMdp {
    enumerate(&HypergridEnv::new(dims, side), DEFAULT_MAX_STATES).unwrap()
}

pub fn words(alphabet: usize, length: usize, mode: WordsMode) -> EnumeratedMdp {
    enumerate(&WordsEnv::new(alphabet, length, mode), DEFAULT_MAX_STATES).unwrap()
}

pub fn trees(labels: u8, max_nodes: usize) -> EnumeratedMdp {
    enumerate(
        &TreeBuildEnv::new(labels, max_nodes, true),
        DEFAULT_MAX_STATES,
    )
    .unwrap()
}

pub fn bitvec(length: usize) -> EnumeratedMdp {
    enumerate(&BitVectorEnv::new(length), DEFAULT_MAX_STATES).unwrap()
}

/// The small MDPs every identity is checked on.
pub fn zoo() -> Vec<(&'static str, EnumeratedMdp)> {
    vec![
        ("simple", simple()),
        ("simple p=5", simple_with_target(5.0)),
        ("grid 2x3", grid(2, 3)),
        ("grid 2x4", grid(2, 4)),
        ("grid 3x3", grid(3, 3)),
        ("words right", words(2, 3, WordsMode::AppendRight)),
        ("words either", words(2, 4, WordsMode::AppendEitherSide)),
        ("trees", trees(4, 4)),
        ("bitvec", bitvec(3)),
        ("random dag", random_dag(7, 12)),
    ]
}

/// Every complete trajectory, by plain recursion over the child lists.
pub fn all_trajectories(mdp: &EnumeratedMdp) -> Vec<Trajectory> {
    fn go(
        mdp: &EnumeratedMdp,
        s: StateId,
        path: &mut Vec<Step>,
        out: &mut Vec<Trajectory>,
        start: StateId,
    ) {
        if mdp.is_terminal(s) {
            out.push(Trajectory::from_steps(start, path.clone()));
            return;
        }
        for &(a, c) in mdp.children(s) {
            path.push(Step {
                from: s,
                action: a,
                to: c,
            });
            go(mdp, c, path, out, start);
            path.pop();
        }
    }
    let mut out = Vec::new();
    let s0 = mdp.initial();
    go(mdp, s0, &mut Vec::new(), &mut out, s0);
    out
}

/// Number of distinct action sequences from the initial state to every
/// state, counted as distinct prefixes of complete trajectories.
pub fn brute_counts(mdp: &EnumeratedMdp) -> Vec<f64> {
    let mut seen = BTreeSet::new();
    let mut counts = vec![0.0; mdp.num_states()];
    counts[mdp.initial().0] = 1.0;
    for tr in all_trajectories(mdp) {
        let mut prefix = Vec::new();
        for st in tr.steps() {
            prefix.push(st.action.0);
            if seen.insert(prefix.clone()) {
                counts[st.to.0] += 1.0;
            }
        }
    }
    counts
}

pub fn traj_log_prob(policy: &ForwardPolicy, tr: &Trajectory) -> f64 {
    tr.steps()
        .iter()
        .map(|st| policy.log_probs[st.from.0][st.action.0])
        .sum()
}

/// Terminal probabilities by summing trajectory probabilities.
pub fn brute_terminal_probs(mdp: &EnumeratedMdp, policy: &ForwardPolicy) -> Vec<f64> {
    let mut p = vec![0.0; mdp.num_states()];
    for tr in all_trajectories(mdp) {
        p[tr.end().0] += traj_log_prob(policy, &tr).exp();
    }
    p
}

/// State marginals by summing over trajectories that pass through each state.
pub fn brute_marginals(mdp: &EnumeratedMdp, policy: &ForwardPolicy) -> Vec<f64> {
    let mut mu = vec![0.0; mdp.num_states()];
    for tr in all_trajectories(mdp) {
        let p = traj_log_prob(policy, &tr).exp();
        for s in tr.states() {
            mu[s.0] += p;
        }
    }
    mu
}

pub fn brute_entropy(mdp: &EnumeratedMdp, policy: &ForwardPolicy) -> f64 {
    all_trajectories(mdp)
        .iter()
        .map(|tr| {
            let lp = traj_log_prob(policy, tr);
            if lp == f64::NEG_INFINITY {
                0.0
            } else {
                -lp.exp() * lp
            }
        })
        .sum()
}

/// `Z = sum_t p~(t)` by direct summation in probability space.
pub fn brute_z(mdp: &EnumeratedMdp) -> f64 {
    mdp.state_ids()
        .filter(|&s| mdp.is_terminal(s))
        .map(|s| mdp.log_target(s).exp())
        .sum()
}

/// Exact KL(mu_T || p) from trajectory enumeration.
pub fn brute_kl(mdp: &EnumeratedMdp, policy: &ForwardPolicy) -> f64 {
    let probs = brute_terminal_probs(mdp, policy);
    let z = brute_z(mdp);
    mdp.state_ids()
        .filter(|&s| mdp.is_terminal(s) && probs[s.0] > 0.0)
        .map(|s| {
            let q = mdp.log_target(s).exp() / z;
            probs[s.0] * (probs[s.0] / q).ln()
        })
        .sum()
}

/// `D[i][j] = v[i] - v[j+1] + sum x[i..=j]` with an explicit inner sum.
pub fn naive_cross(v: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
    let t = x.len();
    let mut d = vec![vec![f64::NAN; t]; t];
    for i in 0..t {
        for j in i..t {
            let mut acc = 0.0;
            for k in i..=j {
                acc += x[k];
            }
            d[i][j] = v[i] - v[j + 1] + acc;
        }
    }
    d
}

/// A random DAG in the text format: node 0 is initial, node `n - 1` and
/// some leaves are terminal, edges always point to larger ids and may be
/// parallel.
pub fn random_dag_text(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n.max(2);
    let mut lines = vec!["initial 0".to_string()];
    let mut terminal = vec![false; n];
    terminal[n - 1] = true;
    for (i, t) in terminal.iter_mut().enumerate().take(n - 1).skip(1) {
        *t = rng.random_bool(0.2) && i > 1;
    }
    for i in 0..n - 1 {
        if terminal[i] {
            continue;
        }
        let k = rng.random_range(1..=3);
        for a in 0..k {
            let c = rng.random_range(i + 1..n);
            lines.push(format!("{i} {a} {c}"));
        }
    }
    for (i, &t) in terminal.iter().enumerate() {
        if t {
            lines.push(format!("terminal {i} {}", rng.random_range(-2.0..2.0)));
        }
    }
    lines.join("\n")
}

/// Random DAG whose non-terminal nodes all have a child and whose terminals
/// carry random finite targets. Nodes that are unreachable are dropped.
pub fn random_dag(n: usize, seed: u64) -> EnumeratedMdp {
    let text = random_dag_text(n, seed);
    // a node without outgoing edges that is not marked terminal would be a
    // dead end; the generator never emits one since every non-terminal gets
    // at least one child
    parse_dag(&text).unwrap()
}

/// Random forward policy with full support.
pub fn random_policy(mdp: &EnumeratedMdp, seed: u64) -> ForwardPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ForwardPolicy {
        log_probs: mdp
            .state_ids()
            .map(|s| {
                let w: Vec<f64> = mdp
                    .children(s)
                    .iter()
                    .map(|_| rng.random_range(0.1..1.0))
                    .collect();
                let z: f64 = w.iter().sum();
                w.iter().map(|x| (x / z).ln()).collect()
            })
            .collect(),
    }
}

pub fn step(from: usize, action: usize, to: usize) -> Step {
    Step {
        from: StateId(from),
        action: ActionId(action),
        to: StateId(to),
    }
}

/// `ln C(n, k)` as a difference of sums of logarithms.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    let lf = |m: u64| (1..=m).map(|i| (i as f64).ln()).sum::<f64>();
    lf(n) - lf(k) - lf(n - k)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol || (a.is_infinite() && a == b)
}

#[track_caller]
pub fn assert_close(a: f64, b: f64, tol: f64) {
    assert!(close(a, b, tol), "{a} vs {b} (tol {tol})");
}

/// State of the simple MDP by its encoding.
pub fn by_name(mdp: &EnumeratedMdp, name: &str) -> StateId {
    mdp.state_ids()
        .find(|&s| mdp.encoding(s) == name.as_bytes())
        .unwrap_or_else(|| panic!("no state {name}"))
}
