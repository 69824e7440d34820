//! The adversary's MDP.
//!
//! Given an agent MDP `M`, an agent policy `π` and a budget `ε`, the adversary
//! observes the true state `s` and picks a perturbed state `s̄` within distance
//! `ε`; the agent then acts on `π(·|s̄)`. The adversary's MDP has the same state
//! space, action set `Ā_s^ε` at `s`, kernel `P̄(·|s,s̄) = Σ_a π(a|s̄) P(·|s,a)` and
//! a reward chosen by the adversary's objective.

use crate::envs::{Gridworld, Norm};
use crate::mdp::{
    policy_evaluation, q_from_policy, value_iteration, MdpBuilder, StateId, TabularMdp,
    TabularPolicy, ValueFunction, DEFAULT_TOLERANCE,
};
use crate::{Error, Result};
use std::fmt::Write as _;

/// Distance between states of a tabular problem.
pub trait StateMetric {
    fn distance(&self, a: StateId, b: StateId) -> f64;
}

impl StateMetric for Gridworld {
    fn distance(&self, a: StateId, b: StateId) -> f64 {
        Gridworld::distance(self, a, b) as f64
    }
}

/// States embedded as points, compared under a [`Norm`].
#[derive(Debug, Clone)]
pub struct EmbeddedMetric {
    pub points: Vec<Vec<f64>>,
    pub norm: Norm,
}

impl StateMetric for EmbeddedMetric {
    fn distance(&self, a: StateId, b: StateId) -> f64 {
        self.norm.distance(&self.points[a], &self.points[b])
    }
}

/// Explicit symmetric distance matrix.
#[derive(Debug, Clone)]
pub struct DistanceMatrix(pub Vec<Vec<f64>>);

impl StateMetric for DistanceMatrix {
    fn distance(&self, a: StateId, b: StateId) -> f64 {
        self.0[a][b]
    }
}

/// `Ā_s^ε` for every state: `s` first, then the other admissible states by ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    sets: Vec<Vec<StateId>>,
    epsilon: f64,
}

impl NeighborSet {
    pub fn new(n_states: usize, epsilon: f64, metric: &dyn StateMetric) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be >= 0, got {epsilon}"
            )));
        }
        let slack = 1e-12 * epsilon.max(1.0);
        let sets = (0..n_states)
            .map(|s| {
                std::iter::once(s)
                    .chain(
                        (0..n_states)
                            .filter(|&t| t != s && metric.distance(s, t) <= epsilon + slack),
                    )
                    .collect()
            })
            .collect();
        Ok(Self { sets, epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn get(&self, s: StateId) -> &[StateId] {
        &self.sets[s]
    }

    pub fn n_states(&self) -> usize {
        self.sets.len()
    }

    pub fn contains(&self, s: StateId, candidate: StateId) -> bool {
        self.sets[s].contains(&candidate)
    }
}

/// Adversary objective.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardMode {
    /// `r̄(s,s̄) = −Σ_a π(a|s̄) r(s,a)`.
    NegateAgent,
    /// Reward 1 for each transition into a target state.
    TargetStates(Vec<StateId>),
    /// `r̄(s,s̄) = Σ_a π(a|s̄) u(a)²`, with `action_values[a] = u(a)` the
    /// real-valued control behind action id `a`.
    Energy { action_values: Vec<f64> },
}

impl RewardMode {
    pub fn name(&self) -> &'static str {
        match self {
            RewardMode::NegateAgent => "negate_agent",
            RewardMode::TargetStates(_) => "target_states",
            RewardMode::Energy { .. } => "energy",
        }
    }
}

/// Deterministic tabular attack `χ: S → S`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TabularAttack {
    map: Vec<StateId>,
}

impl TabularAttack {
    pub fn new(map: Vec<StateId>) -> Self {
        Self { map }
    }

    pub fn identity(n_states: usize) -> Self {
        Self {
            map: (0..n_states).collect(),
        }
    }

    pub fn constant(n_states: usize, target: StateId) -> Self {
        Self {
            map: vec![target; n_states],
        }
    }

    pub fn get(&self, s: StateId) -> StateId {
        self.map[s]
    }

    pub fn as_slice(&self) -> &[StateId] {
        &self.map
    }

    pub fn n_states(&self) -> usize {
        self.map.len()
    }

    /// Observation kernel `O(s̄|s) = 1[χ(s) = s̄]` of the induced POMDP.
    pub fn observation_kernel(&self, s: StateId, s_bar: StateId) -> f64 {
        if self.map[s] == s_bar {
            1.0
        } else {
            0.0
        }
    }

    pub fn is_feasible(&self, neighbors: &NeighborSet) -> bool {
        self.map.len() == neighbors.n_states()
            && self
                .map
                .iter()
                .enumerate()
                .all(|(s, &t)| neighbors.contains(s, t))
    }

    /// `chi s sbar` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (s, t) in self.map.iter().enumerate() {
            writeln!(out, "chi {s} {t}").unwrap();
        }
        out
    }

    /// Reads `chi` lines, ignoring anything else (so an MDP file with appended
    /// `chi` lines parses too).
    pub fn from_text(text: &str, n_states: usize) -> Result<Self> {
        let mut map: Vec<Option<StateId>> = vec![None; n_states];
        for (i, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.first() != Some(&"chi") {
                continue;
            }
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            if fields.len() != 3 {
                return Err(err("expected `chi <s> <sbar>`".into()));
            }
            let s: usize = fields[1]
                .parse()
                .map_err(|_| err(format!("bad state `{}`", fields[1])))?;
            let t: usize = fields[2]
                .parse()
                .map_err(|_| err(format!("bad state `{}`", fields[2])))?;
            if s >= n_states || t >= n_states {
                return Err(err(format!("state out of range in `{line}`")));
            }
            map[s] = Some(t);
        }
        let map = map
            .into_iter()
            .enumerate()
            .map(|(s, t)| {
                t.ok_or(Error::Parse {
                    line: 0,
                    msg: format!("no `chi` line for state {s}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { map })
    }
}

/// `π∘χ`: the agent's effective policy when it observes `χ(s)` in state `s`.
pub fn perturbed_policy(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    chi: &TabularAttack,
) -> Result<TabularPolicy> {
    policy.check_against(mdp)?;
    if chi.n_states() != mdp.n_states() {
        return Err(Error::DimensionMismatch {
            what: "attack map",
            expected: mdp.n_states(),
            found: chi.n_states(),
        });
    }
    let mut rows = Vec::with_capacity(mdp.n_states());
    for s in 0..mdp.n_states() {
        let t = chi.get(s);
        if t >= mdp.n_states() {
            return Err(Error::InvalidPolicy(format!(
                "chi({s}) = {t} is out of bounds"
            )));
        }
        rows.push(transfer_row(mdp, policy, t, s)?);
    }
    TabularPolicy::new(mdp, rows)
}

/// `π(·|from)` re-indexed onto the action list of `to`.
fn transfer_row(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    from: StateId,
    to: StateId,
) -> Result<Vec<f64>> {
    let mut row = vec![0.0; mdp.n_actions(to)];
    for (i, p) in policy.probs(from).iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        let action = mdp.actions(from)[i];
        let j = mdp.action_index(to, action).ok_or_else(|| {
            Error::InvalidPolicy(format!(
                "action {action} chosen in state {from} is unavailable in state {to}"
            ))
        })?;
        row[j] += p;
    }
    Ok(row)
}

/// The adversary's MDP together with the problem it was derived from.
#[derive(Debug, Clone)]
pub struct AttackMdp<'a> {
    base: &'a TabularMdp,
    policy: &'a TabularPolicy,
    neighbors: NeighborSet,
    reward_mode: RewardMode,
    mdp: TabularMdp,
}

/// Builds `M̄` from `(M, π, ε, d)` under the given adversary objective.
pub fn build_attack_mdp<'a>(
    mdp: &'a TabularMdp,
    policy: &'a TabularPolicy,
    epsilon: f64,
    metric: &dyn StateMetric,
    reward_mode: RewardMode,
) -> Result<AttackMdp<'a>> {
    let neighbors = NeighborSet::new(mdp.n_states(), epsilon, metric)?;
    AttackMdp::from_neighbors(mdp, policy, neighbors, reward_mode)
}

impl<'a> AttackMdp<'a> {
    pub fn from_neighbors(
        base: &'a TabularMdp,
        policy: &'a TabularPolicy,
        neighbors: NeighborSet,
        reward_mode: RewardMode,
    ) -> Result<Self> {
        policy.check_against(base)?;
        let n = base.n_states();
        if neighbors.n_states() != n {
            return Err(Error::DimensionMismatch {
                what: "neighbor sets",
                expected: n,
                found: neighbors.n_states(),
            });
        }
        if let RewardMode::TargetStates(targets) = &reward_mode {
            if let Some(t) = targets.iter().find(|t| **t >= n) {
                return Err(Error::InvalidConfig(format!(
                    "target state {t} out of range"
                )));
            }
        }
        let mut b = MdpBuilder::new(n, base.gamma());
        b.initial(base.initial_distribution().to_vec());
        for s in 0..n {
            if base.is_terminal(s) {
                b.terminal(s);
            }
            for &s_bar in neighbors.get(s) {
                let weights = transfer_row(base, policy, s_bar, s)?;
                let mut row: Vec<(StateId, f64)> = Vec::new();
                let mut agent_reward = 0.0;
                for (i, w) in weights.iter().enumerate() {
                    if *w == 0.0 {
                        continue;
                    }
                    agent_reward += w * base.reward(s, i);
                    for &(next, p) in base.transitions(s, i) {
                        match row.iter_mut().find(|(t, _)| *t == next) {
                            Some(e) => e.1 += w * p,
                            None => row.push((next, w * p)),
                        }
                    }
                }
                let reward = if base.is_terminal(s) {
                    0.0
                } else {
                    match &reward_mode {
                        RewardMode::NegateAgent => -agent_reward,
                        RewardMode::TargetStates(targets) => row
                            .iter()
                            .filter(|(t, _)| targets.contains(t))
                            .map(|(_, p)| p)
                            .sum(),
                        RewardMode::Energy { action_values } => {
                            let mut total = 0.0;
                            for (i, w) in weights.iter().enumerate() {
                                let a = base.actions(s)[i];
                                let u = action_values.get(a).ok_or_else(|| {
                                    Error::InvalidConfig(format!("no control value for action {a}"))
                                })?;
                                total += w * u * u;
                            }
                            total
                        }
                    }
                };
                b.action(s, s_bar, reward, row);
            }
        }
        let mdp = b.build()?;
        Ok(Self {
            base,
            policy,
            neighbors,
            reward_mode,
            mdp,
        })
    }

    /// The adversary's MDP; action ids are perturbed state ids.
    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn base(&self) -> &TabularMdp {
        self.base
    }

    pub fn policy(&self) -> &TabularPolicy {
        self.policy
    }

    pub fn neighbors(&self) -> &NeighborSet {
        &self.neighbors
    }

    pub fn reward_mode(&self) -> &RewardMode {
        &self.reward_mode
    }

    /// χ as a deterministic policy of the adversary's MDP.
    pub fn attack_as_policy(&self, chi: &TabularAttack) -> Result<TabularPolicy> {
        if chi.n_states() != self.mdp.n_states() {
            return Err(Error::DimensionMismatch {
                what: "attack map",
                expected: self.mdp.n_states(),
                found: chi.n_states(),
            });
        }
        let choices = (0..chi.n_states())
            .map(|s| {
                self.mdp.action_index(s, chi.get(s)).ok_or_else(|| {
                    Error::InvalidPolicy(format!(
                        "chi({s}) = {} lies outside the epsilon-ball",
                        chi.get(s)
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        TabularPolicy::deterministic(&self.mdp, &choices)
    }

    fn attack_from_policy(&self, policy: &TabularPolicy) -> TabularAttack {
        TabularAttack::new(
            (0..self.mdp.n_states())
                .map(|s| self.mdp.actions(s)[policy.greedy_index(s)])
                .collect(),
        )
    }

    /// `V^χ`, the adversary's value of attack `χ`.
    pub fn attack_value(&self, chi: &TabularAttack, tol: f64) -> Result<ValueFunction> {
        policy_evaluation(&self.mdp, &self.attack_as_policy(chi)?, tol)
    }

    /// Checks `V^χ(s) = −V^{π∘χ}(s)` with both sides evaluated independently.
    pub fn verify_value_identity(&self, chi: &TabularAttack, tol: f64) -> Result<IdentityReport> {
        self.require_negate()?;
        let inner_tol = inner_tolerance(tol);
        let v_attack = self.attack_value(chi, inner_tol)?;
        let composed = perturbed_policy(self.base, self.policy, chi)?;
        let v_agent = policy_evaluation(self.base, &composed, inner_tol)?;
        let mut report = IdentityReport::new(tol);
        for s in 0..self.mdp.n_states() {
            report.record(s, None, (v_attack[s] + v_agent[s]).abs());
        }
        Ok(report)
    }

    /// Checks `Q^χ(s,s̄) = −Σ_a π(a|s̄) Q^{π∘χ}(s,a)` for every `s̄ ∈ Ā_s^ε`,
    /// which for deterministic `π` reads `Q^χ(s,s̄) = −Q^{π∘χ}(s, π(s̄))`.
    pub fn verify_q_identity(&self, chi: &TabularAttack, tol: f64) -> Result<IdentityReport> {
        self.require_negate()?;
        let inner_tol = inner_tolerance(tol);
        let chi_policy = self.attack_as_policy(chi)?;
        let v_attack = policy_evaluation(&self.mdp, &chi_policy, inner_tol)?;
        let q_attack = q_from_policy(&self.mdp, &chi_policy, &v_attack)?;
        let composed = perturbed_policy(self.base, self.policy, chi)?;
        let v_agent = policy_evaluation(self.base, &composed, inner_tol)?;
        let q_agent = q_from_policy(self.base, &composed, &v_agent)?;
        let deterministic = self.policy.is_deterministic();
        let mut report = IdentityReport::new(tol);
        for s in 0..self.mdp.n_states() {
            for (j, &s_bar) in self.mdp.actions(s).iter().enumerate() {
                let rhs = if deterministic {
                    let action = self.base.actions(s_bar)[self.policy.greedy_index(s_bar)];
                    let i = self.base.action_index(s, action).ok_or_else(|| {
                        Error::InvalidPolicy(format!("action {action} unavailable in state {s}"))
                    })?;
                    -q_agent.get(s, i)
                } else {
                    let weights = transfer_row(self.base, self.policy, s_bar, s)?;
                    -weights
                        .iter()
                        .enumerate()
                        .map(|(i, w)| w * q_agent.get(s, i))
                        .sum::<f64>()
                };
                report.record(s, Some(s_bar), (q_attack.get(s, j) - rhs).abs());
            }
        }
        Ok(report)
    }

    fn require_negate(&self) -> Result<()> {
        if self.reward_mode != RewardMode::NegateAgent {
            return Err(Error::InvalidConfig(format!(
                "identity checks need the negate_agent objective, not {}",
                self.reward_mode.name()
            )));
        }
        Ok(())
    }
}

/// Sweep residual for the evaluations behind an identity check at `tol`.
fn inner_tolerance(tol: f64) -> f64 {
    (tol * 1e-3).clamp(1e-13, DEFAULT_TOLERANCE)
}

/// Optimal deterministic attack and the adversary's value under it.
#[derive(Debug, Clone)]
pub struct SolvedAttack {
    pub chi: TabularAttack,
    pub adversary_value: ValueFunction,
}

/// Solves the adversary's MDP exactly. Ties between equally good perturbations
/// go to the lowest state id.
pub fn solve_optimal_attack(attack: &AttackMdp<'_>, tol: f64) -> Result<SolvedAttack> {
    let (value, policy) = value_iteration(attack.mdp(), tol)?;
    Ok(SolvedAttack {
        chi: attack.attack_from_policy(&policy),
        adversary_value: value,
    })
}

/// Largest violation of an identity, with the state (and perturbation) where it occurs.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub max_gap: f64,
    pub worst_state: Option<StateId>,
    pub worst_perturbation: Option<StateId>,
    pub tolerance: f64,
    pub checked: usize,
}

impl IdentityReport {
    fn new(tolerance: f64) -> Self {
        Self {
            max_gap: 0.0,
            worst_state: None,
            worst_perturbation: None,
            tolerance,
            checked: 0,
        }
    }

    fn record(&mut self, s: StateId, s_bar: Option<StateId>, gap: f64) {
        self.checked += 1;
        if gap > self.max_gap || gap.is_nan() {
            self.max_gap = gap;
            self.worst_state = Some(s);
            self.worst_perturbation = s_bar;
        }
    }

    pub fn holds(&self) -> bool {
        self.max_gap <= self.tolerance
    }
}
