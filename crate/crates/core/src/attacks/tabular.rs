use crate::agents::{Agent, ObservationAttack};
use crate::attack_mdp::{NeighborSet, TabularAttack};
use crate::envs::Gridworld;
use crate::mdp::{argmax_first, QFunction, StateId, TabularMdp, TabularPolicy};
use crate::rng::Rng;
use crate::{Error, Result};

/// `π(action|s)` by action id; zero when the action is unavailable at `s`.
fn prob_of(mdp: &TabularMdp, policy: &TabularPolicy, s: StateId, action: usize) -> f64 {
    mdp.action_index(s, action)
        .map_or(0.0, |i| policy.probs(s)[i])
}

/// Action id with the largest probability at `s`, lowest index on ties.
fn best_action(mdp: &TabularMdp, policy: &TabularPolicy, s: StateId) -> usize {
    mdp.actions(s)[argmax_first(policy.probs(s))]
}

/// First candidate (in neighbour order: `s` itself, then ascending id) with the
/// strictly smallest score.
fn first_min(candidates: &[StateId], mut score: impl FnMut(StateId) -> f64) -> StateId {
    let mut best = candidates[0];
    let mut best_score = score(best);
    for &c in &candidates[1..] {
        let v = score(c);
        if v < best_score {
            best = c;
            best_score = v;
        }
    }
    best
}

/// The neighbour that makes the agent least likely to take the action it
/// prefers in the true state.
pub fn huang_attack(
    s: StateId,
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    neighbors: &NeighborSet,
) -> StateId {
    let a_star = best_action(mdp, policy, s);
    first_min(neighbors.get(s), |c| prob_of(mdp, policy, c, a_star))
}

/// The neighbour whose preferred action has the lowest true value `Q^π(s, ·)`.
pub fn pattanaik_attack(
    s: StateId,
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    q: &QFunction,
    neighbors: &NeighborSet,
) -> StateId {
    first_min(neighbors.get(s), |c| {
        let a = best_action(mdp, policy, c);
        match mdp.action_index(s, a) {
            Some(i) => q.get(s, i),
            None => f64::INFINITY,
        }
    })
}

fn check(mdp: &TabularMdp, policy: &TabularPolicy, neighbors: &NeighborSet) -> Result<()> {
    policy.check_against(mdp)?;
    if neighbors.n_states() != mdp.n_states() {
        return Err(Error::DimensionMismatch {
            what: "neighbour sets",
            expected: mdp.n_states(),
            found: neighbors.n_states(),
        });
    }
    Ok(())
}

/// [`huang_attack`] applied at every state.
pub fn huang_chi(mdp: &TabularMdp, policy: &TabularPolicy, neighbors: &NeighborSet) -> Result<TabularAttack> {
    check(mdp, policy, neighbors)?;
    Ok(TabularAttack::new(
        (0..mdp.n_states())
            .map(|s| huang_attack(s, mdp, policy, neighbors))
            .collect(),
    ))
}

/// [`pattanaik_attack`] applied at every state.
pub fn pattanaik_chi(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    q: &QFunction,
    neighbors: &NeighborSet,
) -> Result<TabularAttack> {
    check(mdp, policy, neighbors)?;
    Ok(TabularAttack::new(
        (0..mdp.n_states())
            .map(|s| pattanaik_attack(s, mdp, policy, q, neighbors))
            .collect(),
    ))
}

/// A tabular attack acting on gridworld observations.
#[derive(Debug, Clone)]
pub struct GridObservationAttack {
    pub grid: Gridworld,
    pub chi: TabularAttack,
}

impl ObservationAttack for GridObservationAttack {
    fn perturb(&mut self, obs: &[f64], _agent: &dyn Agent, _rng: &mut Rng) -> Result<Vec<f64>> {
        let s = self.grid.state_from_observation(obs);
        Ok(self.grid.observation(self.chi.get(s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack_mdp::DistanceMatrix;
    use crate::mdp::{policy_evaluation, q_from_policy, MdpBuilder};

    fn distances() -> DistanceMatrix {
        DistanceMatrix(vec![
            vec![0.0, 1.0, 5.0],
            vec![1.0, 0.0, 5.0],
            vec![5.0, 5.0, 0.0],
        ])
    }

    /// Two actions everywhere; state 1 prefers the bad action 1.
    fn flip_problem() -> (TabularMdp, TabularPolicy, NeighborSet) {
        let mut b = MdpBuilder::new(3, 0.9);
        b.action(0, 0, 1.0, vec![(2, 1.0)])
            .action(0, 1, -1.0, vec![(2, 1.0)])
            .action(1, 0, 0.0, vec![(2, 1.0)])
            .action(1, 1, 0.0, vec![(2, 1.0)])
            .action(2, 0, 0.0, vec![(2, 1.0)])
            .terminal(2)
            .initial(vec![1.0, 0.0, 0.0]);
        let mdp = b.build().unwrap();
        let pi = TabularPolicy::deterministic(&mdp, &[0, 1, 0]).unwrap();
        let n = NeighborSet::new(3, 1.0, &distances()).unwrap();
        (mdp, pi, n)
    }

    #[test]
    fn neighbour_flipping_to_the_worse_action_is_chosen() {
        let (mdp, pi, n) = flip_problem();
        let v = policy_evaluation(&mdp, &pi, 1e-12).unwrap();
        let q = q_from_policy(&mdp, &pi, &v).unwrap();
        assert_eq!(pattanaik_attack(0, &mdp, &pi, &q, &n), 1);
        assert_eq!(huang_attack(0, &mdp, &pi, &n), 1);
    }

    #[test]
    fn zero_budget_is_identity() {
        let (mdp, pi, _) = flip_problem();
        let n = NeighborSet::new(3, 0.0, &distances()).unwrap();
        let v = policy_evaluation(&mdp, &pi, 1e-12).unwrap();
        let q = q_from_policy(&mdp, &pi, &v).unwrap();
        assert_eq!(huang_chi(&mdp, &pi, &n).unwrap(), TabularAttack::identity(3));
        assert_eq!(pattanaik_chi(&mdp, &pi, &q, &n).unwrap(), TabularAttack::identity(3));
    }

    #[test]
    fn equal_policies_keep_the_true_state() {
        let (mdp, _, n) = flip_problem();
        let pi = TabularPolicy::deterministic(&mdp, &[0, 0, 0]).unwrap();
        assert_eq!(huang_attack(1, &mdp, &pi, &n), 1);
        assert_eq!(huang_attack(0, &mdp, &pi, &n), 0);
    }
}
