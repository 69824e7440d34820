use super::LoadedAgent;
use crate::agents::Agent;
use crate::attack_mdp::NeighborSet;
use crate::bounds::{alpha_sampled, alpha_tabular, impact_bound, DEFAULT_SAMPLES};
use crate::envs::Norm;
use crate::mdp::policy_evaluation;
use crate::rng::{stream_id, substream};
use crate::{Error, Result};
use std::fmt;

/// Smoothness of an agent at one radius and the resulting impact bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub epsilon: f64,
    pub norm: Norm,
    pub alpha_sup: f64,
    pub alpha_mean: f64,
    /// Sampled α only bounds the true α from below.
    pub exact: bool,
    pub states: usize,
    pub gamma: f64,
    pub reward_bound: f64,
    /// Exact `‖V^π‖∞` for tabular agents, else the a priori `R/(1−γ)`.
    pub v_inf: f64,
    /// `None` when undefined (γ = 1).
    pub bound: Option<f64>,
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.exact { "exact" } else { "sampled lower estimate" };
        writeln!(f, "epsilon      {} ({})", self.epsilon, self.norm)?;
        writeln!(f, "alpha sup    {} ({kind}, {} states)", self.alpha_sup, self.states)?;
        writeln!(f, "alpha mean   {}", self.alpha_mean)?;
        writeln!(f, "gamma        {}", self.gamma)?;
        writeln!(f, "R            {}", self.reward_bound)?;
        writeln!(f, "|V|inf       {}", self.v_inf)?;
        match self.bound {
            Some(b) => writeln!(f, "impact bound {b}"),
            None => writeln!(f, "impact bound undefined for gamma = 1"),
        }
    }
}

/// α and the impact bound at `epsilon`.
///
/// Tabular agents are measured exactly over grid-cell neighborhoods (ℓ1,
/// radius in cells). Neural agents are measured on states visited in
/// `episodes` clean rollouts, `DEFAULT_SAMPLES` ball points per state.
pub fn bound_report(
    agent: &mut LoadedAgent,
    epsilon: f64,
    norm: Norm,
    episodes: usize,
    seed: u64,
) -> Result<BoundReport> {
    let env = agent.make_env()?;
    let reward_bound = env.reward_bound();
    let mean = |a: &[f64]| a.iter().sum::<f64>() / a.len().max(1) as f64;
    match agent {
        LoadedAgent::Tabular(tab) => {
            let mdp = tab.grid().mdp();
            let neighbors = NeighborSet::new(mdp.n_states(), epsilon, tab.grid())?;
            let alpha = alpha_tabular(&mdp, tab.policy(), &neighbors)?;
            let v_inf = policy_evaluation(&mdp, tab.policy(), 1e-10)?.inf_norm();
            Ok(BoundReport {
                epsilon,
                norm: Norm::L1,
                alpha_sup: alpha.sup(),
                alpha_mean: mean(&alpha.alpha),
                exact: true,
                states: mdp.n_states(),
                gamma: mdp.gamma(),
                reward_bound: mdp.reward_bound(),
                v_inf,
                bound: impact_bound(alpha.sup(), mdp.gamma(), mdp.reward_bound(), v_inf).ok(),
            })
        }
        LoadedAgent::Trained(trained) => {
            let gamma = trained.config.gamma;
            let mut env = env;
            let states = visited_states(env.as_mut(), trained, episodes, seed)?;
            let policy = trained.differentiable().ok_or_else(|| {
                Error::Mismatch("smoothness needs a policy over discrete actions".into())
            })?;
            if policy.action_probs(&states[0]).is_err() {
                return Err(Error::Mismatch(
                    "smoothness needs a policy over discrete actions".into(),
                ));
            }
            let probs = |obs: &[f64]| policy.action_probs(obs);
            let alpha = alpha_sampled(&probs, &states, epsilon, norm, DEFAULT_SAMPLES, seed)?;
            let v_inf = reward_bound / (1.0 - gamma);
            Ok(BoundReport {
                epsilon,
                norm,
                alpha_sup: alpha.sup(),
                alpha_mean: mean(&alpha.alpha),
                exact: false,
                states: states.len(),
                gamma,
                reward_bound,
                v_inf,
                bound: impact_bound(alpha.sup(), gamma, reward_bound, v_inf).ok(),
            })
        }
    }
}

fn visited_states(
    env: &mut dyn crate::envs::Environment,
    agent: &mut dyn Agent,
    episodes: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut states = Vec::new();
    for k in 0..episodes.max(1) {
        env.seed(stream_id("bound-env", seed, k as u64));
        let mut rng = substream(seed, "bound", k as u64, 0);
        agent.reset();
        let mut obs = env.reset();
        loop {
            states.push(obs.clone());
            let step = env.step(&agent.act(&obs, &mut rng)?)?;
            obs = step.observation;
            if step.done {
                break;
            }
        }
    }
    Ok(states)
}
