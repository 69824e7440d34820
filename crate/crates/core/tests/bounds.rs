use advrl::attack_mdp::{
    build_attack_mdp, solve_optimal_attack, EmbeddedMetric, NeighborSet, RewardMode, TabularAttack,
};
use advrl::bounds::{
    alpha_sampled, alpha_tabular, empirical_gap, impact_bound, impact_bound_tabular,
    lipschitz_bound, lipschitz_bound_attack_distance, lipschitz_tabular, tv_expectation_check,
};
use advrl::envs::{Gridworld, Norm};
use advrl::mdp::{
    greedy_uniform_policy, policy_evaluation, value_iteration, MdpBuilder, TabularMdp, TabularPolicy,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    mdp: TabularMdp,
    policy: TabularPolicy,
    metric: EmbeddedMetric,
    epsilon: f64,
}

/// Random discounted MDP with states embedded in the unit square.
fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=12);
    let n_actions = rng.random_range(2..=4);
    let gamma = rng.random_range(0.5..0.97);
    let mut b = MdpBuilder::new(n, gamma);
    for s in 0..n {
        for a in 0..n_actions {
            let mut row = Vec::new();
            let mut total = 0.0;
            for t in 0..n {
                if t == s || rng.random_bool(0.5) {
                    let w: f64 = rng.random_range(0.05..1.0);
                    row.push((t, w));
                    total += w;
                }
            }
            row.iter_mut().for_each(|e: &mut (usize, f64)| e.1 /= total);
            b.action(s, a, rng.random_range(-1.0..1.0), row);
        }
    }
    let mdp = b.build().unwrap();
    let deterministic = rng.random_bool(0.5);
    let rows = (0..n)
        .map(|_| {
            if deterministic {
                let mut r = vec![0.0; n_actions];
                r[rng.random_range(0..n_actions)] = 1.0;
                r
            } else {
                let w: Vec<f64> = (0..n_actions).map(|_| rng.random_range(0.01..1.0)).collect();
                let t: f64 = w.iter().sum();
                w.iter().map(|x| x / t).collect()
            }
        })
        .collect();
    let policy = TabularPolicy::new(&mdp, rows).unwrap();
    let metric = EmbeddedMetric {
        points: (0..n)
            .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
            .collect(),
        norm: [Norm::L1, Norm::L2, Norm::Linf][rng.random_range(0..3)],
    };
    Instance {
        mdp,
        policy,
        metric,
        epsilon: rng.random_range(0.0..0.8),
    }
}

fn random_feasible(neighbors: &NeighborSet, rng: &mut ChaCha8Rng) -> TabularAttack {
    TabularAttack::new(
        (0..neighbors.n_states())
            .map(|s| {
                let set = neighbors.get(s);
                set[rng.random_range(0..set.len())]
            })
            .collect(),
    )
}

/// `max |r(s,a)|` straight from the transition table.
fn max_reward(mdp: &TabularMdp) -> f64 {
    (0..mdp.n_states())
        .flat_map(|s| (0..mdp.n_actions(s)).map(move |i| (s, i)))
        .map(|(s, i)| mdp.reward(s, i).abs())
        .fold(0.0, f64::max)
}

#[test]
fn impact_bound_holds_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..100 {
        let inst = instance(seed);
        let neighbors = NeighborSet::new(inst.mdp.n_states(), inst.epsilon, &inst.metric).unwrap();
        let bound = impact_bound_tabular(&inst.mdp, &inst.policy, &neighbors).unwrap();
        let attack = build_attack_mdp(&inst.mdp, &inst.policy, inst.epsilon, &inst.metric, RewardMode::NegateAgent)
            .unwrap();
        let optimal = solve_optimal_attack(&attack, 1e-10).unwrap().chi;
        for chi in [optimal, random_feasible(&neighbors, &mut rng)] {
            let gap = empirical_gap(&inst.mdp, &inst.policy, &chi).unwrap();
            assert!(gap <= bound + 1e-9, "instance {seed}: gap {gap} > bound {bound}");
        }
        // the bound from first principles
        let alpha = alpha_tabular(&inst.mdp, &inst.policy, &neighbors).unwrap();
        let v = policy_evaluation(&inst.mdp, &inst.policy, 1e-12).unwrap();
        let g = inst.mdp.gamma();
        let own = 2.0 * alpha.sup() / (1.0 - g) * (max_reward(&inst.mdp) + g * v.inf_norm());
        assert!((own - bound).abs() <= 1e-8 * bound.max(1.0), "instance {seed}: {own} vs {bound}");
    }
}

#[test]
fn lipschitz_forms_hold_and_are_ordered() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..100 {
        let inst = instance(seed);
        let neighbors = NeighborSet::new(inst.mdp.n_states(), inst.epsilon, &inst.metric).unwrap();
        let l = lipschitz_tabular(&inst.mdp, &inst.policy, &inst.metric).unwrap();
        if !l.is_finite() {
            continue;
        }
        let v = policy_evaluation(&inst.mdp, &inst.policy, 1e-12).unwrap();
        let (r, g) = (inst.mdp.reward_bound(), inst.mdp.gamma());
        let eps_form = lipschitz_bound(l, inst.epsilon, r, v.inf_norm(), g).unwrap();
        let chi = random_feasible(&neighbors, &mut rng);
        let alpha = alpha_tabular(&inst.mdp, &inst.policy, &neighbors)
            .unwrap()
            .with_attack_distance(&chi, &inst.metric);
        let d_form = lipschitz_bound_attack_distance(
            l,
            alpha.attack_distance.as_ref().unwrap(),
            r,
            v.inf_norm(),
            g,
        )
        .unwrap();
        assert!(d_form <= eps_form + 1e-12);
        assert!(alpha.sup() <= l * inst.epsilon + 1e-12);
        let gap = empirical_gap(&inst.mdp, &inst.policy, &chi).unwrap();
        assert!(gap <= eps_form + 1e-9);
    }
}

#[test]
fn tv_expectation_lemma_on_random_trials() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10_000 {
        let k = rng.random_range(1..8);
        let x: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let dist = |rng: &mut ChaCha8Rng| {
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
            let t: f64 = w.iter().sum::<f64>().max(1e-12);
            w.into_iter().map(|v| v / t).collect::<Vec<f64>>()
        };
        let (f1, f2) = (dist(&mut rng), dist(&mut rng));
        let check = tv_expectation_check(&x, &f1, &f2).unwrap();
        assert!(check.holds, "{check:?}");
    }
}

fn optimal_grid(gamma: f64) -> (Gridworld, TabularMdp, TabularPolicy) {
    let grid = Gridworld::new(6, 6).unwrap();
    let mdp = grid.mdp().with_gamma(gamma).unwrap();
    let (v, _) = value_iteration(&mdp, 1e-12).unwrap();
    (grid, mdp.clone(), greedy_uniform_policy(&mdp, &v, 1e-9).unwrap())
}

#[test]
fn grid_alpha_matches_enumeration() {
    let (grid, mdp, pi) = optimal_grid(0.99);
    let neighbors = NeighborSet::new(mdp.n_states(), 1.0, &grid).unwrap();
    let alpha = alpha_tabular(&mdp, &pi, &neighbors).unwrap();
    for s in 0..mdp.n_states() {
        let mut expected: f64 = 0.0;
        for c in 0..mdp.n_states() {
            if grid.distance(s, c) > 1 {
                continue;
            }
            // both rows over the four move ids
            let mut diff = 0.0;
            for a in 0..4 {
                let p = |t: usize| mdp.action_index(t, a).map_or(0.0, |i| pi.probs(t)[i]);
                diff += (p(s) - p(c)).abs();
            }
            expected = expected.max(diff / 2.0);
        }
        assert!((alpha.alpha[s] - expected).abs() < 1e-12, "state {s}");
    }
    let zero = alpha_tabular(&mdp, &pi, &NeighborSet::new(mdp.n_states(), 0.0, &grid).unwrap()).unwrap();
    assert_eq!(zero.sup(), 0.0);

    let bound = impact_bound_tabular(&mdp, &pi, &neighbors).unwrap();
    let attack = build_attack_mdp(&mdp, &pi, 1.0, &grid, RewardMode::NegateAgent).unwrap();
    let chi = solve_optimal_attack(&attack, 1e-10).unwrap().chi;
    let gap = empirical_gap(&mdp, &pi, &chi).unwrap();
    assert!(gap > 0.0 && gap <= bound);
}

#[test]
fn undiscounted_bound_is_reported_undefined() {
    let (grid, _, _) = optimal_grid(0.9);
    let mdp = grid.mdp();
    let (v, _) = value_iteration(&mdp, 1e-10).unwrap();
    let pi = greedy_uniform_policy(&mdp, &v, 1e-9).unwrap();
    let neighbors = NeighborSet::new(mdp.n_states(), 1.0, &grid).unwrap();
    assert!(impact_bound_tabular(&mdp, &pi, &neighbors).is_err());
    assert!(impact_bound(0.5, 1.0, 1.0, 1.0).is_err());
}

#[test]
fn sampled_alpha_never_exceeds_the_discretised_exact_alpha() {
    let (grid, mdp, pi) = optimal_grid(0.95);
    let probs = |obs: &[f64]| -> advrl::Result<Vec<f64>> {
        let s = grid.state_from_observation(obs);
        let mut row = vec![0.0; 4];
        for (i, p) in pi.probs(s).iter().enumerate() {
            row[mdp.actions(s)[i]] += p;
        }
        Ok(row)
    };
    // observations are cell coordinates over 5, so ℓ1 rounding moves a point by ≤ 0.1 + 0.1
    let eps = 0.2;
    let states: Vec<Vec<f64>> = (0..mdp.n_states()).map(|s| grid.observation(s)).collect();
    let sampled = alpha_sampled(&probs, &states, eps, Norm::L1, 64, 3).unwrap();
    assert!(sampled.is_lower_bound());
    let metric = EmbeddedMetric {
        points: states.clone(),
        norm: Norm::L1,
    };
    let wide = NeighborSet::new(mdp.n_states(), eps + 0.2 + 1e-9, &metric).unwrap();
    let exact = alpha_tabular(&mdp, &pi, &wide).unwrap();
    for s in 0..mdp.n_states() {
        assert!(sampled.alpha[s] <= exact.alpha[s] + 1e-12, "state {s}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn alpha_is_monotone_in_epsilon(seed in 0u64..10_000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let inst = instance(seed);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let n = inst.mdp.n_states();
        let small = alpha_tabular(&inst.mdp, &inst.policy, &NeighborSet::new(n, lo, &inst.metric).unwrap()).unwrap();
        let large = alpha_tabular(&inst.mdp, &inst.policy, &NeighborSet::new(n, hi, &inst.metric).unwrap()).unwrap();
        for s in 0..n {
            prop_assert!(small.alpha[s] <= large.alpha[s]);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&large.alpha[s]));
        }
    }

    #[test]
    fn deterministic_policies_have_binary_alpha(seed in 0u64..10_000) {
        let inst = instance(seed);
        if inst.policy.is_deterministic() {
            let n = inst.mdp.n_states();
            let nb = NeighborSet::new(n, inst.epsilon, &inst.metric).unwrap();
            let alpha = alpha_tabular(&inst.mdp, &inst.policy, &nb).unwrap();
            for s in 0..n {
                let changes = nb.get(s).iter().any(|&c| inst.policy.greedy_index(c) != inst.policy.greedy_index(s));
                prop_assert_eq!(alpha.alpha[s], if changes { 1.0 } else { 0.0 });
            }
        }
    }
}
