use super::Agent;
use crate::envs::{Action, ActionSpace, Environment};
use crate::rng::{stream_id, substream, Rng};
use crate::{Error, Result};
use rand::Rng as _;

/// A map from the true observation to the one the agent receives.
pub trait ObservationAttack {
    /// Perturbed observation for `obs`. White-box attacks may read the agent
    /// through [`Agent::differentiable`].
    fn perturb(&mut self, obs: &[f64], agent: &dyn Agent, rng: &mut Rng) -> Result<Vec<f64>>;
    fn reset(&mut self) {}
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeResult {
    pub episode: usize,
    pub ret: f64,
    pub length: usize,
}

/// Uniform action: a random index, or a uniform point of the action box.
pub fn random_action(space: &ActionSpace, rng: &mut Rng) -> Action {
    match space {
        ActionSpace::Discrete(n) => Action::Discrete(rng.random_range(0..*n)),
        ActionSpace::Continuous { dim, low, high } => {
            Action::Continuous((0..*dim).map(|_| rng.random_range(*low..=*high)).collect())
        }
    }
}

/// Runs `episodes` episodes. Each starts with `random_steps` uniform actions
/// (their rewards count), then the agent acts on `attack(s)` when an attack is
/// given while the environment evolves from the true state. Episode `k` uses
/// its own substreams of `seed`, so results do not depend on execution order.
pub fn evaluate_policy(
    env: &mut dyn Environment,
    agent: &mut dyn Agent,
    mut attack: Option<&mut dyn ObservationAttack>,
    episodes: usize,
    random_steps: usize,
    seed: u64,
) -> Result<Vec<EpisodeResult>> {
    if episodes == 0 {
        return Err(Error::InvalidConfig("at least one episode is required".into()));
    }
    if env.obs_dim() != agent.obs_dim() || env.action_space() != agent.action_space() {
        return Err(Error::Mismatch(format!(
            "agent ({} inputs, {:?}) does not fit `{}` ({} inputs, {:?})",
            agent.obs_dim(),
            agent.action_space(),
            env.name(),
            env.obs_dim(),
            env.action_space()
        )));
    }
    let space = env.action_space();
    let mut out = Vec::with_capacity(episodes);
    for k in 0..episodes {
        env.seed(stream_id("eval-env", seed, k as u64));
        let mut rng = substream(seed, "eval", k as u64, 0);
        let mut attack_rng = substream(seed, "eval-attack", k as u64, 0);
        agent.reset();
        if let Some(a) = attack.as_deref_mut() {
            a.reset();
        }
        let mut obs = env.reset();
        let (mut ret, mut length) = (0.0, 0usize);
        loop {
            let action = if length < random_steps {
                random_action(&space, &mut rng)
            } else {
                match attack.as_deref_mut() {
                    Some(a) => {
                        let seen = a.perturb(&obs, agent, &mut attack_rng)?;
                        agent.act(&seen, &mut rng)?
                    }
                    None => agent.act(&obs, &mut rng)?,
                }
            };
            let step = env.step(&action)?;
            ret += step.reward;
            length += 1;
            obs = step.observation;
            if step.done {
                break;
            }
        }
        out.push(EpisodeResult {
            episode: k,
            ret,
            length,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::TabularAgent;
    use crate::envs::{Gridworld, GridworldEnv};
    use crate::mdp::{greedy_uniform_policy, value_iteration, DEFAULT_TOLERANCE};

    struct Identity;

    impl ObservationAttack for Identity {
        fn perturb(&mut self, obs: &[f64], _: &dyn Agent, _: &mut Rng) -> Result<Vec<f64>> {
            Ok(obs.to_vec())
        }
    }

    fn optimal_agent(grid: Gridworld) -> TabularAgent {
        let mdp = grid.mdp();
        let (v, _) = value_iteration(&mdp, DEFAULT_TOLERANCE).unwrap();
        TabularAgent::new(grid, greedy_uniform_policy(&mdp, &v, 1e-9).unwrap()).unwrap()
    }

    #[test]
    fn repeated_calls_agree_and_identity_attack_is_neutral() {
        let grid = Gridworld::new(5, 4).unwrap();
        let mut env = GridworldEnv::new(grid);
        let mut agent = optimal_agent(grid);
        let a = evaluate_policy(&mut env, &mut agent, None, 20, 2, 9).unwrap();
        let b = evaluate_policy(&mut env, &mut agent, None, 20, 2, 9).unwrap();
        assert_eq!(a, b);
        let mut id = Identity;
        let c = evaluate_policy(&mut env, &mut agent, Some(&mut id), 20, 2, 9).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn mismatched_agent_rejected() {
        let grid = Gridworld::new(3, 3).unwrap();
        let mut agent = optimal_agent(grid);
        let mut env = crate::envs::make_mountaincar(false);
        assert!(matches!(
            evaluate_policy(&mut env, &mut agent, None, 1, 0, 0),
            Err(Error::Mismatch(_))
        ));
        let mut g = GridworldEnv::new(grid);
        assert!(evaluate_policy(&mut g, &mut agent, None, 0, 0, 0).is_err());
    }
}
