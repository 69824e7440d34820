use crate::agents::{Agent, DifferentiablePolicy, ObservationAttack};
use crate::envs::{clamp_unit, Norm};
use crate::mdp::argmin_first;
use crate::rng::Rng;
use crate::{Error, Result};

/// Fast-gradient perturbation at full budget: pushes `s` along the steepest
/// descent of the cross-entropy towards the agent's least likely action.
///
/// Returns `s` unchanged when the gradient vanishes.
pub fn fgm_attack(
    obs: &[f64],
    policy: &dyn DifferentiablePolicy,
    epsilon: f64,
    norm: Norm,
) -> Result<Vec<f64>> {
    let probs = policy.action_probs(obs)?;
    let target = argmin_first(&probs);
    let g = policy.cross_entropy_gradient(obs, target)?;
    if g.iter().all(|v| *v == 0.0) {
        return Ok(obs.to_vec());
    }
    let dir = norm.unit_direction(&g);
    let moved: Vec<f64> = obs.iter().zip(&dir).map(|(s, d)| s - epsilon * d).collect();
    Ok(clamp_unit(&moved))
}

/// [`fgm_attack`] as an observation attack; needs a differentiable agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FgmAttack {
    pub epsilon: f64,
    pub norm: Norm,
}

impl ObservationAttack for FgmAttack {
    fn perturb(&mut self, obs: &[f64], agent: &dyn Agent, _rng: &mut Rng) -> Result<Vec<f64>> {
        let policy = agent
            .differentiable()
            .ok_or_else(|| Error::Mismatch("FGM needs gradient access to the agent".into()))?;
        fgm_attack(obs, policy, self.epsilon, self.norm)
    }
}
