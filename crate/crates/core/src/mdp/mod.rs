//! Finite MDPs and their exact solvers.
//!
//! States are dense ids `0..n_states`. Each state carries its own ordered list of
//! action ids; per-action data (transitions, rewards, policy probabilities) is
//! stored by *position* in that list, which the docs call the action index.

mod solve;
mod text;

pub use solve::{
    greedy_uniform_policy, iteration_cap, policy_evaluation, q_from_policy, tv_distance,
    value_iteration, DEFAULT_TOLERANCE,
};

use crate::{Error, Result};

pub type StateId = usize;
pub type ActionId = usize;

const ROW_TOLERANCE: f64 = 1e-9;

/// A finite MDP with expected rewards and sparse transition rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    actions: Vec<Vec<ActionId>>,
    transitions: Vec<Vec<Vec<(StateId, f64)>>>,
    rewards: Vec<Vec<f64>>,
    reward_bound: f64,
    initial: Vec<f64>,
    gamma: f64,
    terminal: Vec<bool>,
}

impl TabularMdp {
    pub fn n_states(&self) -> usize {
        self.actions.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Action ids available in `s`, in index order.
    pub fn actions(&self, s: StateId) -> &[ActionId] {
        &self.actions[s]
    }

    pub fn n_actions(&self, s: StateId) -> usize {
        self.actions[s].len()
    }

    pub fn action_index(&self, s: StateId, action: ActionId) -> Option<usize> {
        self.actions[s].iter().position(|&a| a == action)
    }

    /// Sparse next-state distribution for the action at `index` in `s`.
    pub fn transitions(&self, s: StateId, index: usize) -> &[(StateId, f64)] {
        &self.transitions[s][index]
    }

    pub fn reward(&self, s: StateId, index: usize) -> f64 {
        self.rewards[s][index]
    }

    /// Declared bound R with |r(s,a)| ≤ R everywhere.
    pub fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial
    }

    pub fn is_terminal(&self, s: StateId) -> bool {
        self.terminal[s]
    }

    pub fn terminal_states(&self) -> impl Iterator<Item = StateId> + '_ {
        self.terminal
            .iter()
            .enumerate()
            .filter(|(_, t)| **t)
            .map(|(s, _)| s)
    }

    pub fn is_episodic(&self) -> bool {
        self.terminal.iter().any(|t| *t)
    }

    /// Copy of this MDP with a different discount factor.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let mut out = self.clone();
        out.gamma = gamma;
        if gamma >= 1.0 && !out.is_episodic() {
            return Err(Error::InvalidMdp(
                "gamma = 1 requires at least one terminal state".into(),
            ));
        }
        Ok(out)
    }

    /// One-step lookahead `r(s,a) + γ Σ P(s'|s,a) V(s')`.
    pub fn backup(&self, s: StateId, index: usize, values: &[f64]) -> f64 {
        let future: f64 = self.transitions[s][index]
            .iter()
            .map(|&(next, p)| p * values[next])
            .sum();
        self.rewards[s][index] + self.gamma * future
    }

    /// Checks every structural invariant. Builders call this; it is public so
    /// derived MDPs can be re-checked in tests.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_states();
        if n == 0 {
            return Err(Error::InvalidMdp("no states".into()));
        }
        check_gamma(self.gamma)?;
        if self.gamma >= 1.0 && !self.is_episodic() {
            return Err(Error::InvalidMdp(
                "gamma = 1 requires at least one terminal state".into(),
            ));
        }
        check_distribution(&self.initial, "initial distribution")?;
        if self.initial.len() != n {
            return Err(Error::DimensionMismatch {
                what: "initial distribution",
                expected: n,
                found: self.initial.len(),
            });
        }
        for s in 0..n {
            if self.actions[s].is_empty() {
                return Err(Error::InvalidMdp(format!("state {s} has no actions")));
            }
            for (i, row) in self.transitions[s].iter().enumerate() {
                let mut total = 0.0;
                for &(next, p) in row {
                    if next >= n {
                        return Err(Error::InvalidMdp(format!(
                            "transition ({s},{}) leads to unknown state {next}",
                            self.actions[s][i]
                        )));
                    }
                    if !(p >= 0.0) {
                        return Err(Error::InvalidMdp(format!(
                            "negative or NaN probability in ({s},{})",
                            self.actions[s][i]
                        )));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > ROW_TOLERANCE {
                    return Err(Error::InvalidMdp(format!(
                        "transition row ({s},{}) sums to {total}",
                        self.actions[s][i]
                    )));
                }
                let r = self.rewards[s][i];
                if !r.is_finite() || r.abs() > self.reward_bound + 1e-12 {
                    return Err(Error::InvalidMdp(format!(
                        "reward {r} at ({s},{}) exceeds bound {}",
                        self.actions[s][i], self.reward_bound
                    )));
                }
                if self.terminal[s] {
                    let self_loop = row.iter().all(|&(next, p)| next == s || p == 0.0);
                    if !self_loop || r != 0.0 {
                        return Err(Error::InvalidMdp(format!(
                            "terminal state {s} must self-loop with reward 0"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidMdp(format!(
            "discount {gamma} outside [0, 1]"
        )));
    }
    Ok(())
}

pub(crate) fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::InvalidMdp(format!("{what} has a negative entry")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::InvalidMdp(format!("{what} sums to {total}")));
    }
    Ok(())
}

/// Incremental constructor for [`TabularMdp`].
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    actions: Vec<Vec<ActionId>>,
    transitions: Vec<Vec<Vec<(StateId, f64)>>>,
    rewards: Vec<Vec<f64>>,
    reward_bound: Option<f64>,
    initial: Option<Vec<f64>>,
    gamma: f64,
    terminal: Vec<bool>,
}

impl MdpBuilder {
    pub fn new(n_states: usize, gamma: f64) -> Self {
        Self {
            actions: vec![Vec::new(); n_states],
            transitions: vec![Vec::new(); n_states],
            rewards: vec![Vec::new(); n_states],
            reward_bound: None,
            initial: None,
            gamma,
            terminal: vec![false; n_states],
        }
    }

    /// Adds (or replaces) action `action` in state `s`.
    pub fn action(
        &mut self,
        s: StateId,
        action: ActionId,
        reward: f64,
        transitions: Vec<(StateId, f64)>,
    ) -> &mut Self {
        match self.actions[s].iter().position(|&a| a == action) {
            Some(i) => {
                self.transitions[s][i] = transitions;
                self.rewards[s][i] = reward;
            }
            None => {
                self.actions[s].push(action);
                self.transitions[s].push(transitions);
                self.rewards[s].push(reward);
            }
        }
        self
    }

    /// Accumulates probability mass on `(s, action) -> next`, creating the action if needed.
    pub(crate) fn add_transition(
        &mut self,
        s: StateId,
        action: ActionId,
        next: StateId,
        p: f64,
    ) -> &mut Self {
        let i = self.ensure_action(s, action);
        let row = &mut self.transitions[s][i];
        match row.iter_mut().find(|(t, _)| *t == next) {
            Some(entry) => entry.1 += p,
            None => row.push((next, p)),
        }
        self
    }

    pub(crate) fn set_reward(&mut self, s: StateId, action: ActionId, reward: f64) -> &mut Self {
        let i = self.ensure_action(s, action);
        self.rewards[s][i] = reward;
        self
    }

    fn ensure_action(&mut self, s: StateId, action: ActionId) -> usize {
        match self.actions[s].iter().position(|&a| a == action) {
            Some(i) => i,
            None => {
                self.actions[s].push(action);
                self.transitions[s].push(Vec::new());
                self.rewards[s].push(0.0);
                self.actions[s].len() - 1
            }
        }
    }

    pub fn initial(&mut self, dist: Vec<f64>) -> &mut Self {
        self.initial = Some(dist);
        self
    }

    pub fn terminal(&mut self, s: StateId) -> &mut Self {
        self.terminal[s] = true;
        self
    }

    /// Declares R explicitly; otherwise R = max |r(s,a)|.
    pub fn reward_bound(&mut self, bound: f64) -> &mut Self {
        self.reward_bound = Some(bound);
        self
    }

    pub fn build(&self) -> Result<TabularMdp> {
        let n = self.actions.len();
        let observed = self
            .rewards
            .iter()
            .flatten()
            .fold(0.0_f64, |m, r| m.max(r.abs()));
        let reward_bound = match self.reward_bound {
            Some(b) if b + 1e-12 < observed => {
                return Err(Error::InvalidMdp(format!(
                    "declared reward bound {b} below observed {observed}"
                )))
            }
            Some(b) => b,
            None => observed,
        };
        let initial = match &self.initial {
            Some(p) => p.clone(),
            None => {
                let live: Vec<bool> = self.terminal.iter().map(|t| !t).collect();
                let count = live.iter().filter(|l| **l).count();
                if count == 0 {
                    vec![1.0 / n as f64; n]
                } else {
                    live.iter()
                        .map(|l| if *l { 1.0 / count as f64 } else { 0.0 })
                        .collect()
                }
            }
        };
        // Keep per-row sparse entries in state order for deterministic output.
        let transitions = self
            .transitions
            .iter()
            .map(|rows| {
                rows.iter()
                    .map(|row| {
                        let mut row = row.clone();
                        row.sort_by_key(|(s, _)| *s);
                        row
                    })
                    .collect()
            })
            .collect();
        let mdp = TabularMdp {
            actions: self.actions.clone(),
            transitions,
            rewards: self.rewards.clone(),
            reward_bound,
            initial,
            gamma: self.gamma,
            terminal: self.terminal.clone(),
        };
        mdp.validate()?;
        Ok(mdp)
    }
}

/// Stochastic policy stored per state, aligned with the state's action indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    probs: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn new(mdp: &TabularMdp, probs: Vec<Vec<f64>>) -> Result<Self> {
        let policy = Self { probs };
        policy.check_against(mdp)?;
        Ok(policy)
    }

    /// Point mass on the action at `choices[s]` (an action index).
    pub fn deterministic(mdp: &TabularMdp, choices: &[usize]) -> Result<Self> {
        if choices.len() != mdp.n_states() {
            return Err(Error::DimensionMismatch {
                what: "deterministic choices",
                expected: mdp.n_states(),
                found: choices.len(),
            });
        }
        let mut probs = Vec::with_capacity(choices.len());
        for (s, &c) in choices.iter().enumerate() {
            let n = mdp.n_actions(s);
            if c >= n {
                return Err(Error::InvalidPolicy(format!(
                    "action index {c} out of range in state {s}"
                )));
            }
            let mut row = vec![0.0; n];
            row[c] = 1.0;
            probs.push(row);
        }
        Ok(Self { probs })
    }

    pub fn uniform(mdp: &TabularMdp) -> Self {
        let probs = (0..mdp.n_states())
            .map(|s| {
                let n = mdp.n_actions(s);
                vec![1.0 / n as f64; n]
            })
            .collect();
        Self { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self, s: StateId) -> &[f64] {
        &self.probs[s]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn is_deterministic(&self) -> bool {
        self.probs.iter().all(|row| {
            row.iter().filter(|p| **p == 1.0).count() == 1
                && row.iter().all(|p| *p == 0.0 || *p == 1.0)
        })
    }

    /// Index of the most likely action; ties go to the lowest index.
    pub fn greedy_index(&self, s: StateId) -> usize {
        argmax_first(&self.probs[s])
    }

    pub fn check_against(&self, mdp: &TabularMdp) -> Result<()> {
        if self.probs.len() != mdp.n_states() {
            return Err(Error::DimensionMismatch {
                what: "policy states",
                expected: mdp.n_states(),
                found: self.probs.len(),
            });
        }
        for (s, row) in self.probs.iter().enumerate() {
            if row.len() != mdp.n_actions(s) {
                return Err(Error::InvalidPolicy(format!(
                    "state {s}: {} probabilities for {} actions",
                    row.len(),
                    mdp.n_actions(s)
                )));
            }
            check_distribution(row, "policy row")
                .map_err(|e| Error::InvalidPolicy(format!("state {s}: {e}")))?;
        }
        Ok(())
    }
}

/// Index of the first maximal entry.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the first minimal entry.
pub fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// State values V(s).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn inf_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `Σ_s p0(s) V(s)`.
    pub fn expected_under(&self, dist: &[f64]) -> f64 {
        dist.iter().zip(&self.values).map(|(p, v)| p * v).sum()
    }
}

impl std::ops::Index<StateId> for ValueFunction {
    type Output = f64;
    fn index(&self, s: StateId) -> &f64 {
        &self.values[s]
    }
}

/// Action values Q(s, ·), aligned with the state's action indices.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction {
    pub values: Vec<Vec<f64>>,
}

impl QFunction {
    pub fn get(&self, s: StateId, index: usize) -> f64 {
        self.values[s][index]
    }

    pub fn row(&self, s: StateId) -> &[f64] {
        &self.values[s]
    }
}
