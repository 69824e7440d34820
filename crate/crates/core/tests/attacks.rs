use advrl::agents::{Agent, AgentConfig, AgentModel, Algo, DifferentiablePolicy, TrainedAgent};
use advrl::attack_mdp::{build_attack_mdp, perturbed_policy, solve_optimal_attack, NeighborSet, RewardMode};
use advrl::attacks::{
    fgm_attack, huang_attack, huang_chi, pattanaik_attack, pattanaik_chi, train_attack_blackbox,
    train_attack_whitebox, AgentInTheLoop, AttackConfig, AttackKind, NeuralAttack,
};
use advrl::envs::{Action, ActionSpace, EnvStep, Environment, Gridworld, Norm, ObsBounds};
use advrl::mdp::{greedy_uniform_policy, policy_evaluation, q_from_policy, value_iteration, TabularPolicy};
use advrl::neural::{
    cross_entropy_onehot, softmax_temp, softmax_temp_backward, Activation, Mlp, Trainable,
};
use advrl::rng::{seeded, stream_id, Rng};
use advrl::Result;
use ndarray::{Array1, Array2, ArrayView2};
use proptest::prelude::*;
use rand::Rng as _;

fn optimal_grid(n: usize) -> (Gridworld, advrl::mdp::TabularMdp, TabularPolicy) {
    let grid = Gridworld::new(n, n).unwrap();
    let mdp = grid.mdp();
    let (v, _) = value_iteration(&mdp, 1e-10).unwrap();
    let pi = greedy_uniform_policy(&mdp, &v, 1e-9).unwrap();
    (grid, mdp, pi)
}

/// `s` first, then every cell within ℓ1 distance `eps` by ascending id.
fn enumerate_ball(grid: &Gridworld, s: usize, eps: usize) -> Vec<usize> {
    let mut out = vec![s];
    out.extend((0..grid.n_states()).filter(|&c| c != s && grid.distance(s, c) <= eps));
    out
}

fn prob(mdp: &advrl::mdp::TabularMdp, pi: &TabularPolicy, s: usize, a: usize) -> f64 {
    mdp.action_index(s, a).map_or(0.0, |i| pi.probs(s)[i])
}

fn preferred(mdp: &advrl::mdp::TabularMdp, pi: &TabularPolicy, s: usize) -> usize {
    let p = pi.probs(s);
    let mut best = 0;
    for i in 1..p.len() {
        if p[i] > p[best] {
            best = i;
        }
    }
    mdp.actions(s)[best]
}

#[test]
fn tabular_baselines_match_enumeration_on_6x6() {
    let (grid, mdp, pi) = optimal_grid(6);
    let v = policy_evaluation(&mdp, &pi, 1e-12).unwrap();
    let q = q_from_policy(&mdp, &pi, &v).unwrap();
    let neighbors = NeighborSet::new(mdp.n_states(), 1.0, &grid).unwrap();
    for s in 0..mdp.n_states() {
        let ball = enumerate_ball(&grid, s, 1);
        assert_eq!(neighbors.get(s), ball.as_slice());

        let a_star = preferred(&mdp, &pi, s);
        let huang_scores: Vec<f64> = ball.iter().map(|&c| prob(&mdp, &pi, c, a_star)).collect();
        let pat_scores: Vec<f64> = ball
            .iter()
            .map(|&c| {
                let a = preferred(&mdp, &pi, c);
                mdp.action_index(s, a).map_or(f64::INFINITY, |i| q.get(s, i))
            })
            .collect();
        for (scores, chosen) in [
            (&huang_scores, huang_attack(s, &mdp, &pi, &neighbors)),
            (&pat_scores, pattanaik_attack(s, &mdp, &pi, &q, &neighbors)),
        ] {
            let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
            let first = ball[scores.iter().position(|&x| x == min).unwrap()];
            assert_eq!(chosen, first, "state {s}");
        }
    }
}

#[test]
fn exact_attack_dominates_baselines_on_6x6() {
    let (grid, mdp, pi) = optimal_grid(6);
    let attack = build_attack_mdp(&mdp, &pi, 1.0, &grid, RewardMode::NegateAgent).unwrap();
    let solved = solve_optimal_attack(&attack, 1e-10).unwrap();
    let v_opt = policy_evaluation(&mdp, &perturbed_policy(&mdp, &pi, &solved.chi).unwrap(), 1e-10).unwrap();
    let v = policy_evaluation(&mdp, &pi, 1e-12).unwrap();
    let q = q_from_policy(&mdp, &pi, &v).unwrap();
    let n = attack.neighbors();
    let mut strictly_worse = 0;
    for chi in [huang_chi(&mdp, &pi, n).unwrap(), pattanaik_chi(&mdp, &pi, &q, n).unwrap()] {
        assert!(chi.is_feasible(n));
        let composed = perturbed_policy(&mdp, &pi, &chi).unwrap();
        let v_b = policy_evaluation(&mdp, &composed, 1e-10).unwrap();
        for s in 0..mdp.n_states() {
            assert!(v_opt[s] <= v_b[s] + 1e-9, "state {s}: {} > {}", v_opt[s], v_b[s]);
            if v_b[s] > v_opt[s] + 1e-9 {
                strictly_worse += 1;
            }
        }
    }
    assert!(strictly_worse > 0);
}

/// A five-cell corridor `k = 0..4` with the goal at 4, observed as `k/4`.
/// Moving left from 0 stays put; every step costs 1.
struct Corridor {
    k: usize,
    steps: usize,
    rng: Rng,
    bounds: ObsBounds,
}

impl Corridor {
    fn new() -> Self {
        Self {
            k: 0,
            steps: 0,
            rng: seeded(0),
            bounds: ObsBounds::new(vec![0.0], vec![4.0]).unwrap(),
        }
    }
}

const CAP: usize = 20;

fn next_cell(k: usize, right: bool) -> usize {
    if right {
        k + 1
    } else {
        k.saturating_sub(1)
    }
}

impl Environment for Corridor {
    fn name(&self) -> &str {
        "corridor"
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(2)
    }
    fn bounds(&self) -> &ObsBounds {
        &self.bounds
    }
    fn seed(&mut self, seed: u64) {
        self.rng = seeded(seed);
    }
    fn reset(&mut self) -> Vec<f64> {
        self.k = self.rng.random_range(0..4);
        self.steps = 0;
        vec![self.k as f64 / 4.0]
    }
    fn step(&mut self, action: &Action) -> Result<EnvStep> {
        let right = matches!(action, Action::Discrete(0));
        self.k = next_cell(self.k, right);
        self.steps += 1;
        let terminal = self.k == 4;
        let truncated = !terminal && self.steps >= CAP;
        Ok(EnvStep {
            observation: vec![self.k as f64 / 4.0],
            reward: -1.0,
            done: terminal || truncated,
            truncated,
        })
    }
    fn reward_floor(&self) -> f64 {
        -(CAP as f64)
    }
}

/// Logits `(c·(x − θ), 0)`: action 0 (right) when the observation exceeds θ.
struct Threshold {
    c: f64,
    theta: f64,
}

impl Threshold {
    fn logits(&self, x: f64) -> Vec<f64> {
        vec![self.c * (x - self.theta), 0.0]
    }
}

impl Agent for Threshold {
    fn obs_dim(&self) -> usize {
        1
    }
    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(2)
    }
    fn reset(&mut self) {}
    fn act(&mut self, obs: &[f64], _: &mut Rng) -> Result<Action> {
        Ok(Action::Discrete(if obs[0] > self.theta { 0 } else { 1 }))
    }
    fn differentiable(&self) -> Option<&dyn DifferentiablePolicy> {
        Some(self)
    }
}

impl DifferentiablePolicy for Threshold {
    fn obs_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        2
    }
    fn action_probs(&self, obs: &[f64]) -> Result<Vec<f64>> {
        softmax_temp(&self.logits(obs[0]), 1.0)
    }
    fn cross_entropy_gradient(&self, obs: &[f64], target: usize) -> Result<Vec<f64>> {
        let (_, g) = cross_entropy_onehot(&self.logits(obs[0]), target, 1.0)?;
        Ok(vec![g[0] * self.c])
    }
    fn action_repr_batch(&self, obs: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((obs.nrows(), 2));
        for i in 0..obs.nrows() {
            out.row_mut(i).assign(&Array1::from(self.action_probs(&[obs[[i, 0]]])?));
        }
        Ok(out)
    }
    fn action_repr_vjp_batch(&self, obs: &ArrayView2<f64>, grad: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((obs.nrows(), 1));
        for i in 0..obs.nrows() {
            let p = self.action_probs(&[obs[[i, 0]]])?;
            let dz = softmax_temp_backward(&p, &grad.row(i).to_vec(), 1.0);
            out[[i, 0]] = dz[0] * self.c;
        }
        Ok(out)
    }
}

fn corridor_config(eps: f64) -> AttackConfig {
    let mut c = AttackConfig::preset("gridworld").unwrap();
    c.epsilon = eps;
    c.gamma = 0.9;
    c.steps = 6_000;
    c.warmup = 200;
    c.batch = 32;
    c.hidden = vec![32, 32];
    c.tau = 0.05;
    c.noise.steps = 3_000;
    c
}

/// Exact agent value under the deterministic attack `chi` (per cell).
fn corridor_values(agent: &Threshold, chi: &[f64], gamma: f64) -> [f64; 5] {
    let mut v = [0.0; 5];
    for _ in 0..2_000 {
        let old = v;
        for k in 0..4 {
            let right = chi[k] > agent.theta;
            v[k] = -1.0 + gamma * old[next_cell(k, right)];
        }
    }
    v
}

#[test]
fn whitebox_critic_tracks_the_attacked_agent_value() {
    let mut env = Corridor::new();
    let mut agent = Threshold { c: 20.0, theta: 0.45 };
    let cfg = corridor_config(0.1);
    let trained = {
        let mut world = AgentInTheLoop::new(&mut env, &mut agent, true).unwrap();
        train_attack_whitebox(&mut world, &cfg, 5).unwrap()
    };
    let chi: Vec<f64> = (0..4).map(|k| trained.perturb_one(&[k as f64 / 4.0]).unwrap()[0]).collect();
    let v = corridor_values(&agent, &chi, cfg.gamma);
    for k in 0..4 {
        let s = k as f64 / 4.0;
        assert!((chi[k] - s).abs() <= 0.1 + 1e-9);
        let repr = agent.action_probs(&[chi[k]]).unwrap();
        let q = trained.critic.predict_one(&[s, repr[0], repr[1]]).unwrap()[0];
        // Q_θ(s, π(χ(s))) against Q^{π∘χ}(s, π(χ(s))) = V^{π∘χ}(s)
        assert!((q - v[k]).abs() <= 0.1, "cell {k}: critic {q} vs exact {}", v[k]);
    }
}

#[test]
fn zero_budget_training_leaves_returns_unchanged() {
    let cfg = AttackConfig {
        steps: 400,
        warmup: 50,
        ..corridor_config(0.0)
    };
    let mut env = Corridor::new();
    let mut agent = Threshold { c: 20.0, theta: 0.3 };
    let trained = {
        let mut world = AgentInTheLoop::new(&mut env, &mut agent, false).unwrap();
        train_attack_blackbox(&mut world, &cfg, 3).unwrap()
    };
    // replay the same environment stream without any adversary
    let mut env = Corridor::new();
    env.seed(stream_id("attack-env", 3, 0));
    let mut obs = env.reset();
    let mut rng = seeded(0);
    let mut clean = Vec::new();
    let (mut ret, mut t) = (0.0, 0);
    while t < cfg.steps {
        let step = env.step(&agent.act(&obs, &mut rng).unwrap()).unwrap();
        ret += step.reward;
        t += 1;
        obs = step.observation;
        if step.done {
            clean.push(ret);
            ret = 0.0;
            obs = env.reset();
        }
    }
    assert_eq!(trained.log.returns(), clean);
    assert!(!clean.is_empty());
}

#[test]
fn whitebox_training_requires_gradient_access() {
    let mut env = Corridor::new();
    let mut agent = Threshold { c: 20.0, theta: 0.3 };
    let mut world = AgentInTheLoop::new(&mut env, &mut agent, false).unwrap();
    assert!(train_attack_whitebox(&mut world, &corridor_config(0.1), 0).is_err());
}

fn dqn_agent(seed: u64) -> TrainedAgent {
    let mut rng = seeded(seed);
    let q = Mlp::new(&[2, 16, 16, 3], Activation::Relu, Activation::Linear, &mut rng).unwrap();
    let cfg = AgentConfig::preset("mountaincar", Algo::Dqn).unwrap();
    TrainedAgent::new("mountaincar", cfg, AgentModel::Dqn(q), ActionSpace::Discrete(3))
}

/// The white-box actor gradient chains critic, agent policy, projection and
/// actor; compare it with central differences.
#[test]
fn whitebox_actor_gradient_matches_differences() {
    const H: f64 = 1e-5;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-4);
    for seed in 0..10 {
        let agent = dqn_agent(seed);
        let mut rng = seeded(50 + seed);
        let mut config = AttackConfig::preset("mountaincar").unwrap();
        config.epsilon = 0.05;
        let mut attack = NeuralAttack {
            kind: AttackKind::WhiteBox,
            env: "mountaincar".into(),
            actor: Mlp::new(&[2, 8, 2], Activation::Relu, Activation::Linear, &mut rng).unwrap(),
            critic: Mlp::new(&[5, 8, 1], Activation::Relu, Activation::Linear, &mut rng).unwrap(),
            config,
            epsilon: 0.05,
            log: Default::default(),
        };
        let x = Array2::from_shape_fn((6, 2), |_| rng.random_range(0.1..0.9));
        let policy = agent.differentiable();
        let grads = attack.actor_gradient(&x.view(), policy).unwrap();
        let f0 = attack.actor_objective(&x.view(), policy).unwrap();
        let (mut checked, mut skipped) = (0, 0);
        for (k, g) in grads.0.iter().enumerate() {
            for i in 0..g.len() {
                let orig = attack.actor.params()[k][i];
                attack.actor.params_mut()[k][i] = orig + H;
                let up = attack.actor_objective(&x.view(), policy).unwrap();
                attack.actor.params_mut()[k][i] = orig - H;
                let down = attack.actor_objective(&x.view(), policy).unwrap();
                attack.actor.params_mut()[k][i] = orig;
                if rel((up - f0) / H, (f0 - down) / H) > 1e-3 {
                    skipped += 1;
                    continue;
                }
                let fd = (up - down) / (2.0 * H);
                assert!(rel(g[i], fd) <= 1e-4, "seed {seed} tensor {k}[{i}]: {} vs {fd}", g[i]);
                checked += 1;
            }
        }
        assert!(checked > 5 * skipped, "checked {checked}, skipped {skipped}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fgm_stays_within_budget(
        seed in 0u64..1000,
        x in prop::collection::vec(0.0f64..1.0, 2),
        eps in 0.0f64..0.3,
        norm in prop_oneof![Just(Norm::L1), Just(Norm::L2), Just(Norm::Linf)],
    ) {
        let agent = dqn_agent(seed);
        let out = fgm_attack(&x, agent.differentiable().unwrap(), eps, norm).unwrap();
        prop_assert!(norm.distance(&x, &out) <= eps + 1e-9);
        prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn neural_attack_stays_within_budget(
        seed in 0u64..1000,
        x in prop::collection::vec(0.0f64..1.0, 2),
        eps in 0.0f64..0.3,
        norm in prop_oneof![Just(Norm::L1), Just(Norm::L2), Just(Norm::Linf)],
    ) {
        let mut rng = seeded(seed);
        let mut config = AttackConfig::preset("mountaincar").unwrap();
        config.norm = norm;
        config.epsilon = eps;
        let attack = NeuralAttack {
            kind: AttackKind::BlackBox,
            env: "mountaincar".into(),
            actor: Mlp::new(&[2, 8, 2], Activation::Relu, Activation::Linear, &mut rng).unwrap(),
            critic: Mlp::new(&[4, 8, 1], Activation::Relu, Activation::Linear, &mut rng).unwrap(),
            config,
            epsilon: eps,
            log: Default::default(),
        };
        let out = attack.perturb_one(&x).unwrap();
        prop_assert!(norm.distance(&x, &out) <= eps + 1e-9);
    }
}
