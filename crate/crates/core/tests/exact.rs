mod common;

use common::*;
use maxent_gfn::envs::{hypergrid_target, tree_n, words_n, LabeledTree, TreeBuildEnv, WordsMode};
use maxent_gfn::exact::*;
use maxent_gfn::logspace::logsumexp_iter;
use maxent_gfn::mdp::{enumerate, Environment, StateId, DEFAULT_MAX_STATES};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn prob(policy: &ForwardPolicy, s: StateId, a: usize) -> f64 {
    policy.log_probs[s.0][a].exp()
}

#[test]
fn simple_mdp_counts_and_backwards() {
    let mdp = simple();
    let l = count_paths(&mdp);
    let (s1, s2, st) = (
        by_name(&mdp, "s1"),
        by_name(&mdp, "s2"),
        by_name(&mdp, "sT"),
    );
    assert_close(l[st.0], 3f64.ln(), TOL);
    assert_close(l[s1.0], 2f64.ln(), TOL);
    assert_close(l[s2.0], 0.0, TOL);

    let qm = backward_maxent(&mdp, &l);
    let slot = |child: StateId, parent: StateId| {
        mdp.parents(child)
            .iter()
            .position(|&(p, _)| p == parent)
            .unwrap()
    };
    assert_close(qm.log_prob(st, slot(st, s1)).exp(), 2.0 / 3.0, TOL);
    assert_close(qm.log_prob(st, slot(st, s2)).exp(), 1.0 / 3.0, TOL);
    let qu = backward_uniform(&mdp);
    assert_close(qu.log_prob(st, 0).exp(), 0.5, TOL);
    assert_close(qu.log_prob(st, 1).exp(), 0.5, TOL);
    assert_close(qu.log_prob(s2, 0).exp(), 1.0, TOL);
}

#[test]
fn simple_mdp_uniform_backward_gfn() {
    let mdp = simple();
    let s0 = mdp.initial();
    let s2 = by_name(&mdp, "s2");
    let (_, pi) = forward_from_backward(&mdp, &backward_uniform(&mdp)).unwrap();
    // action 0 at s0 leads to s1, action 1 to s2
    assert_close(prob(&pi, s0, 0), 0.25, TOL);
    assert_close(prob(&pi, s0, 1), 0.75, TOL);
    assert_close(prob(&pi, s2, 0), 1.0 / 3.0, TOL);
    assert_close(prob(&pi, s2, 1), 2.0 / 3.0, TOL);
    let mut paths: Vec<f64> = all_trajectories(&mdp)
        .iter()
        .map(|t| traj_log_prob(&pi, t).exp())
        .collect();
    paths.sort_by(f64::total_cmp);
    for (p, want) in paths.iter().zip([0.25, 0.25, 0.5]) {
        assert_close(*p, want, TOL);
    }
    let mu = marginals(&mdp, &pi).unwrap();
    assert_close(flow_entropy(&mdp, &pi, &mu), 1.5 * 2f64.ln(), TOL);
}

#[test]
fn simple_mdp_maxent_gfn() {
    let mdp = simple();
    let l = count_paths(&mdp);
    let (_, pi) = forward_from_backward(&mdp, &backward_maxent(&mdp, &l)).unwrap();
    assert_close(prob(&pi, mdp.initial(), 0), 1.0 / 3.0, TOL);
    assert_close(prob(&pi, mdp.initial(), 1), 2.0 / 3.0, TOL);
    for t in all_trajectories(&mdp) {
        assert_close(traj_log_prob(&pi, &t).exp(), 1.0 / 3.0, TOL);
    }
    let mu = marginals(&mdp, &pi).unwrap();
    assert_close(flow_entropy(&mdp, &pi, &mu), 3f64.ln(), TOL);
    assert_close(
        trajectory_entropy_bruteforce(&mdp, &pi, 100).unwrap(),
        3f64.ln(),
        TOL,
    );
    assert_close(max_entropy_bound(&mdp, &l), 3f64.ln(), TOL);
    let gsql = gsql_policy(&mdp, &l).unwrap();
    for t in all_trajectories(&mdp) {
        assert_close(traj_log_prob(&gsql, &t).exp(), 1.0 / 3.0, TOL);
    }
}

#[test]
fn partition_function_examples() {
    let mdp = simple_with_target(5.0);
    let (direct, value) = log_partition(&mdp, &count_paths(&mdp)).unwrap();
    assert_close(direct, 5f64.ln(), TOL);
    assert_close(value, 5f64.ln(), TOL);

    let two = maxent_gfn::dagspec::parse_dag("initial 0\n0 0 1\n0 1 2\nterminal 1 0\nterminal 2 0")
        .unwrap();
    let (direct, value) = log_partition(&two, &count_paths(&two)).unwrap();
    assert_close(direct, 2f64.ln(), TOL);
    assert_close(value, 2f64.ln(), TOL);

    let g = grid(2, 8);
    let (direct, value) = log_partition(&g, &count_paths(&g)).unwrap();
    assert_close(direct, brute_z(&g).ln(), TOL);
    assert_close(value, direct, TOL);
}

#[test]
fn large_grid_corner_count() {
    let g = grid(2, 64);
    assert_eq!(g.num_states(), 2 * 64 * 64);
    let env = maxent_gfn::envs::HypergridEnv::new(2, 64);
    let corner = g
        .state_ids()
        .find(|&s| {
            let st = env.decode(g.encoding(s));
            st.coords == [63, 63] && !st.done
        })
        .unwrap();
    let l = count_paths(&g);
    assert!((l[corner.0] - ln_binomial(126, 63)).abs() < 1e-6);
}

#[test]
fn words_counts_match_closed_form() {
    for n in 1..=10 {
        for mode in [WordsMode::AppendRight, WordsMode::AppendEitherSide] {
            let mdp = words(2, n, mode);
            let l = count_paths(&mdp);
            let want = (words_n(n, mode) as f64).ln();
            for t in mdp.terminals() {
                assert_close(l[t.0], want, TOL);
            }
        }
    }
    assert_eq!(words_n(5, WordsMode::AppendEitherSide), 16);
    assert_eq!(words_n(1, WordsMode::AppendEitherSide), 1);
    assert_eq!(words_n(4, WordsMode::AppendRight), 1);
}

#[test]
fn tree_counts_match_closed_form() {
    let env = TreeBuildEnv::new(5, 5, true);
    let mdp = enumerate(&env, DEFAULT_MAX_STATES).unwrap();
    let l = count_paths(&mdp);
    for s in mdp.state_ids().filter(|&s| mdp.encoding(s) != b"") {
        let tree = LabeledTree::from_code(std::str::from_utf8(mdp.encoding(s)).unwrap());
        assert_close(l[s.0], (tree_n(&tree) as f64).ln(), TOL);
    }
}

fn tree_state(
    mdp: &maxent_gfn::mdp::EnumeratedMdp,
    env: &TreeBuildEnv,
    tree: &LabeledTree,
) -> StateId {
    let code = env.encode(&tree.canonicalize());
    mdp.state_ids()
        .find(|&s| mdp.encoding(s) == code.as_slice())
        .unwrap()
}

#[test]
fn tree_counterexample_backward_is_not_uniform() {
    let star = LabeledTree::new(vec![0, 1, 2, 3], vec![(0, 1), (0, 2), (0, 3)]);
    let path = LabeledTree::new(vec![0, 1, 2, 3], vec![(0, 1), (1, 2), (2, 3)]);
    assert_eq!(tree_n(&star), 12);
    assert_eq!(tree_n(&path), 8);

    // star with one arm extended: its parents are the star and two paths
    let env = TreeBuildEnv::new(5, 5, true);
    let mdp = enumerate(&env, DEFAULT_MAX_STATES).unwrap();
    let middle = LabeledTree::new(vec![0, 1, 2, 3, 4], vec![(0, 1), (0, 2), (0, 3), (1, 4)]);
    let s = tree_state(&mdp, &env, &middle);
    let l = count_paths(&mdp);
    assert_close(l[s.0].exp(), 28.0, 1e-9);
    let counts: Vec<f64> = mdp
        .parents(s)
        .iter()
        .map(|&(p, _)| l[p.0].exp().round())
        .collect();
    let mut sorted = counts.clone();
    sorted.sort_by(f64::total_cmp);
    assert_eq!(sorted, vec![8.0, 8.0, 12.0]);

    let qm = backward_maxent(&mdp, &l);
    let qu = backward_uniform(&mdp);
    for (slot, n) in counts.iter().enumerate() {
        assert_close(qm.log_prob(s, slot).exp(), n / 28.0, TOL);
        assert_close(qu.log_prob(s, slot).exp(), 1.0 / 3.0, TOL);
    }
    let star_slot = counts.iter().position(|&n| n == 12.0).unwrap();
    let path_slot = counts.iter().position(|&n| n == 8.0).unwrap();
    assert_close(
        qm.log_prob(s, star_slot).exp() / qm.log_prob(s, path_slot).exp(),
        12.0 / 8.0,
        TOL,
    );
}

#[test]
fn bitvector_backwards_coincide() {
    let mdp = bitvec(4);
    let l = count_paths(&mdp);
    let mut depth = vec![0usize; mdp.num_states()];
    for s in mdp.state_ids() {
        if let Some(&(p, _)) = mdp.parents(s).first() {
            depth[s.0] = depth[p.0] + 1;
        }
    }
    for s in mdp.state_ids() {
        let fact: f64 = (1..=depth[s.0]).map(|k| k as f64).product();
        assert_close(l[s.0], fact.ln(), TOL);
        assert_eq!(mdp.parents(s).len(), depth[s.0]);
    }
    let qm = backward_maxent(&mdp, &l);
    let qu = backward_uniform(&mdp);
    for s in mdp.state_ids() {
        for (a, b) in qm.log_probs[s.0].iter().zip(&qu.log_probs[s.0]) {
            assert_close(*a, *b, 1e-12);
        }
    }
    let mu_m = forward_from_backward(&mdp, &qm).unwrap().1;
    let mu_u = forward_from_backward(&mdp, &qu).unwrap().1;
    let hm = flow_entropy(&mdp, &mu_m, &marginals(&mdp, &mu_m).unwrap());
    let hu = flow_entropy(&mdp, &mu_u, &marginals(&mdp, &mu_u).unwrap());
    assert_close(hm, hu, TOL);
}

#[test]
fn hypergrid_target_values() {
    assert_close(hypergrid_target(&[2, 2], 5), 0.1, 1e-15);
    assert_close(hypergrid_target(&[0, 4], 5), 0.6, 1e-15);
    assert_close(hypergrid_target(&[0, 0, 0], 3), 0.6, 1e-15);
    // s = 12/63: |s - 0.5| = 0.31
    assert_close(hypergrid_target(&[12, 51], 64), 2.6, 1e-15);
}

#[test]
fn counts_match_enumeration_on_the_zoo() {
    for (name, mdp) in zoo() {
        let l = count_paths(&mdp);
        let brute = brute_counts(&mdp);
        for s in mdp.state_ids() {
            assert!(
                close(l[s.0].exp(), brute[s.0], 1e-9 * brute[s.0]),
                "{name} state {s}"
            );
        }
    }
}

#[test]
fn gsql_samples_the_target_on_the_zoo() {
    for (name, mdp) in zoo() {
        let l = count_paths(&mdp);
        let pi = gsql_policy(&mdp, &l).unwrap();
        let probs = brute_terminal_probs(&mdp, &pi);
        let z = brute_z(&mdp);
        for t in mdp.terminals() {
            assert!(
                close(probs[t.0], mdp.log_target(t).exp() / z, TOL),
                "{name} {t}"
            );
        }
        let (direct, value) = log_partition(&mdp, &l).unwrap();
        assert!(
            close(direct, z.ln(), TOL) && close(value, direct, TOL),
            "{name}"
        );
    }
}

#[test]
fn entropies_on_the_zoo() {
    for (name, mdp) in zoo() {
        let l = count_paths(&mdp);
        let maxent = forward_from_backward(&mdp, &backward_maxent(&mdp, &l))
            .unwrap()
            .1;
        let uniform = forward_from_backward(&mdp, &backward_uniform(&mdp))
            .unwrap()
            .1;
        let hm = flow_entropy(&mdp, &maxent, &marginals(&mdp, &maxent).unwrap());
        let hu = flow_entropy(&mdp, &uniform, &marginals(&mdp, &uniform).unwrap());
        assert!(close(hm, brute_entropy(&mdp, &maxent), TOL), "{name}");
        assert!(close(hu, brute_entropy(&mdp, &uniform), TOL), "{name}");
        assert!(close(hm, max_entropy_bound(&mdp, &l), TOL), "{name}");
        assert!(hm >= hu - TOL, "{name}: {hm} < {hu}");
        let bf = trajectory_entropy_bruteforce(&mdp, &maxent, 1_000_000).unwrap();
        assert!(close(bf, hm, TOL), "{name}");
    }
}

#[test]
fn maxent_backward_reproduces_gsql() {
    for (name, mdp) in zoo() {
        let l = count_paths(&mdp);
        let (log_f, from_q) = forward_from_backward(&mdp, &backward_maxent(&mdp, &l)).unwrap();
        let sol = gsql_solution(&mdp, &l).unwrap();
        for s in mdp.state_ids() {
            for (a, b) in from_q.log_probs[s.0].iter().zip(&sol.policy.log_probs[s.0]) {
                assert!(close(a.exp(), b.exp(), TOL), "{name} {s}");
            }
            assert!(close(log_f[s.0], l[s.0] + sol.v[s.0], TOL), "{name} {s}");
        }
    }
}

#[test]
fn telescoping_and_uniform_backward_trajectories() {
    for (name, mdp) in zoo() {
        let l = count_paths(&mdp);
        let q = backward_maxent(&mdp, &l);
        let mut per_terminal = vec![0.0; mdp.num_states()];
        for tr in all_trajectories(&mdp) {
            let steps = tr.steps();
            for i in 0..steps.len() {
                for j in i..steps.len() {
                    let sum: f64 = steps[i..=j]
                        .iter()
                        .map(|st| q.log_prob(st.to, mdp.parent_slot(st.from, st.action)))
                        .sum();
                    assert!(
                        close(sum, l[steps[i].from.0] - l[steps[j].to.0], TOL),
                        "{name}"
                    );
                }
            }
            let back = q.trajectory_log_prob(&mdp, &tr);
            assert!(close(back, -l[tr.end().0], TOL), "{name}");
            per_terminal[tr.end().0] += back.exp();
        }
        for t in mdp.terminals() {
            assert!(close(per_terminal[t.0], 1.0, TOL), "{name}");
        }
    }
}

#[test]
fn soft_policies_are_path_consistent() {
    for (name, mdp) in zoo() {
        let rewards: Vec<Vec<f64>> = mdp
            .state_ids()
            .map(|s| {
                (0..mdp.children(s).len())
                    .map(|a| 0.1 * (s.0 + a) as f64 - 0.3)
                    .collect()
            })
            .collect();
        let terminal: Vec<f64> = mdp.state_ids().map(|s| 0.2 * s.0 as f64).collect();
        let sol = soft_value_iteration(&mdp, &rewards, &terminal);
        for tr in all_trajectories(&mdp) {
            let steps = tr.steps();
            for i in 0..steps.len() {
                for j in i..steps.len() {
                    let lp: f64 = steps[i..=j]
                        .iter()
                        .map(|st| sol.policy.log_prob(st.from, st.action.0))
                        .sum();
                    let r: f64 = steps[i..=j]
                        .iter()
                        .map(|st| rewards[st.from.0][st.action.0])
                        .sum();
                    let rhs = sol.v[steps[j].to.0] + r - sol.v[steps[i].from.0];
                    assert!(close(lp, rhs, TOL), "{name}");
                }
            }
        }
    }
}

#[test]
fn soft_value_with_raw_rewards_weights_by_counts() {
    // terminal reward p~ itself: P(t) proportional to n(t) exp(p~(t))
    let mdp = grid(2, 3);
    let l = count_paths(&mdp);
    let terminal: Vec<f64> = mdp
        .state_ids()
        .map(|s| {
            if mdp.is_terminal(s) {
                mdp.log_target(s).exp()
            } else {
                0.0
            }
        })
        .collect();
    let sol = soft_value_iteration(&mdp, &zero_step_rewards(&mdp), &terminal);
    let probs = brute_terminal_probs(&mdp, &sol.policy);
    let norm = logsumexp_iter(mdp.terminals().map(|t| l[t.0] + terminal[t.0]));
    for t in mdp.terminals() {
        assert_close(probs[t.0], (l[t.0] + terminal[t.0] - norm).exp(), TOL);
    }
    // equal terminal rewards on the simple MDP: three equiprobable paths
    let s = simple();
    let sol = soft_value_iteration(&s, &zero_step_rewards(&s), &vec![0.0; s.num_states()]);
    for tr in all_trajectories(&s) {
        assert_close(traj_log_prob(&sol.policy, &tr).exp(), 1.0 / 3.0, TOL);
    }
}

#[test]
fn marginals_match_enumeration() {
    for (name, mdp) in zoo() {
        let pi = random_policy(&mdp, 7);
        let mu = marginals(&mdp, &pi).unwrap();
        let brute = brute_marginals(&mdp, &pi);
        for s in mdp.state_ids() {
            assert!(close(mu[s.0], brute[s.0], 1e-12), "{name}");
        }
        let total: f64 = mdp.terminals().map(|t| mu[t.0]).sum();
        assert!(close(total, 1.0, 1e-12), "{name}");
    }
}

#[test]
fn deterministic_and_single_path_cases() {
    // chain: any backward gives a deterministic forward policy, zero entropy
    let chain = maxent_gfn::dagspec::parse_dag("initial 0\n0 0 1\n1 0 2\nterminal 2 1.5").unwrap();
    let (_, pi) = forward_from_backward(&chain, &backward_uniform(&chain)).unwrap();
    let mu = marginals(&chain, &pi).unwrap();
    assert!(mu.iter().all(|&m| close(m, 1.0, 1e-15)));
    assert_eq!(flow_entropy(&chain, &pi, &mu), 0.0);
    assert_eq!(trajectory_entropy_bruteforce(&chain, &pi, 10).unwrap(), 0.0);

    // tree-shaped MDP: l = 0 everywhere and the bound is H(p)
    let right = words(2, 3, WordsMode::AppendRight);
    let l = count_paths(&right);
    assert!(l.iter().all(|&x| x == 0.0));
    assert_close(max_entropy_bound(&right, &l), target_entropy(&right), 1e-12);
}

#[test]
fn tables_round_trip_through_json() {
    let mdp = grid(2, 4);
    let t = ExactTables::solve(&mdp).unwrap();
    let back = ExactTables::from_json(&t.to_json()).unwrap();
    assert_eq!(t, back);
    let total: f64 = mdp.terminals().map(|s| t.mu[s.0]).sum();
    assert_close(total, 1.0, 1e-12);
    assert_eq!(t.l[mdp.initial().0], 0.0);
    assert_close(t.log_z, brute_z(&mdp).ln(), TOL);
}

#[test]
fn zero_flow_and_multiple_initials() {
    let dead = maxent_gfn::dagspec::parse_dag("initial 0\n0 0 1\nterminal 1 -inf").unwrap();
    assert_eq!(
        forward_from_backward(&dead, &backward_uniform(&dead)).unwrap_err(),
        ExactError::ZeroFlow
    );
    assert!(matches!(
        gsql_policy(&dead, &count_paths(&dead)),
        Err(ExactError::NonFiniteTarget(_))
    ));
    let inv = maxent_gfn::mdp::invert(&grid(2, 3));
    assert_eq!(
        log_partition(&inv, &count_paths(&inv)).unwrap_err(),
        ExactError::MultipleInitialStates
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_dags_satisfy_every_identity(n in 2usize..10, seed in any::<u64>()) {
        let mdp = random_dag(n, seed);
        let l = count_paths(&mdp);
        let brute = brute_counts(&mdp);
        for s in mdp.state_ids() {
            prop_assert!(close(l[s.0].exp(), brute[s.0], 1e-9 * brute[s.0]));
        }
        let (direct, value) = log_partition(&mdp, &l).unwrap();
        prop_assert!(close(direct, value, TOL));
        prop_assert!(close(direct, brute_z(&mdp).ln(), TOL));

        let gsql = gsql_policy(&mdp, &l).unwrap();
        prop_assert!(gsql.normalization_error() < 1e-12);
        let probs = brute_terminal_probs(&mdp, &gsql);
        let z = brute_z(&mdp);
        for t in mdp.terminals() {
            prop_assert!(close(probs[t.0], mdp.log_target(t).exp() / z, TOL));
        }
        let qm = backward_maxent(&mdp, &l);
        prop_assert!(qm.normalization_error() < 1e-12);
        let (_, maxent) = forward_from_backward(&mdp, &qm).unwrap();
        let (_, uniform) = forward_from_backward(&mdp, &backward_uniform(&mdp)).unwrap();
        let hm = flow_entropy(&mdp, &maxent, &marginals(&mdp, &maxent).unwrap());
        let hu = flow_entropy(&mdp, &uniform, &marginals(&mdp, &uniform).unwrap());
        prop_assert!(close(hm, brute_entropy(&mdp, &maxent), TOL));
        prop_assert!(close(hm, max_entropy_bound(&mdp, &l), TOL));
        prop_assert!(hm >= hu - TOL);
    }

    #[test]
    fn random_policies_conserve_mass(n in 2usize..10, seed in any::<u64>(), pseed in any::<u64>()) {
        let mdp = random_dag(n, seed);
        let pi = random_policy(&mdp, pseed);
        let mu = marginals(&mdp, &pi).unwrap();
        let total: f64 = mdp.terminals().map(|t| mu[t.0]).sum();
        prop_assert!(close(total, 1.0, 1e-12));
        let h = flow_entropy(&mdp, &pi, &mu);
        prop_assert!(close(h, brute_entropy(&mdp, &pi), TOL));
    }
}
