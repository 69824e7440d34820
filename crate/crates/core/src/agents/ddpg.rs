use super::dqn::stack;
use super::replay::{ReplayBuffer, Transition};
use super::train::{run_training, Learner};
use super::{box_scale, AgentConfig, AgentModel, Algo, Schedule, TrainedAgent};
use crate::envs::{Action, ActionSpace, Environment};
use crate::neural::{adam_step, soft_update, Activation, AdamState, Mlp};
use crate::rng::{substream, Rng};
use crate::{Error, Result};
use ndarray::{concatenate, s, Array2, Axis};
use rand_distr::{Distribution, Normal};

/// Actor `μ(s)` (tanh, rescaled to the action box), critic `Q(s, a)` on the
/// concatenated input, and their soft-updated targets.
#[derive(Debug, Clone)]
pub struct DdpgLearner {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    actor_adam: AdamState,
    critic_adam: AdamState,
    gamma: f64,
    tau: f64,
    batch: usize,
    noise: Schedule,
    low: f64,
    high: f64,
}

impl DdpgLearner {
    pub fn new(obs_dim: usize, space: &ActionSpace, config: &AgentConfig, rng: &mut Rng) -> Result<Self> {
        let (dim, low, high) = match space {
            ActionSpace::Continuous { dim, low, high } => (*dim, *low, *high),
            ActionSpace::Discrete(_) => {
                return Err(Error::Mismatch("DDPG needs a continuous action space".into()))
            }
        };
        let mut a_sizes = vec![obs_dim];
        a_sizes.extend_from_slice(&config.actor_hidden);
        a_sizes.push(dim);
        let mut c_sizes = vec![obs_dim + dim];
        c_sizes.extend_from_slice(&config.hidden);
        c_sizes.push(1);
        let actor = Mlp::new(&a_sizes, Activation::Relu, Activation::Tanh, rng)?;
        let critic = Mlp::new(&c_sizes, Activation::Relu, Activation::Linear, rng)?;
        Ok(Self {
            actor_adam: AdamState::new(&actor, config.actor_lr).with_clip(config.grad_clip),
            critic_adam: AdamState::new(&critic, config.lr).with_clip(config.grad_clip),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            gamma: config.gamma,
            tau: config.tau,
            batch: config.batch,
            noise: config.exploration,
            low,
            high,
        })
    }

    fn scale(&self) -> (f64, f64) {
        box_scale(&ActionSpace::Continuous {
            dim: 1,
            low: self.low,
            high: self.high,
        })
    }

    /// Actions for a batch of observations under `actor`.
    fn act_batch(&self, actor: &Mlp, x: &Array2<f64>) -> Result<Array2<f64>> {
        let (c, h) = self.scale();
        Ok(actor.predict(&x.view())?.mapv(|v| c + h * v))
    }

    /// Critic regression followed by one deterministic policy-gradient step.
    /// Returns the critic loss.
    pub fn train_batch(&mut self, batch: &[&Transition]) -> Result<f64> {
        let dim = self.actor.input_dim();
        let x = stack(batch.iter().map(|t| t.obs.as_slice()), dim);
        let xn = stack(batch.iter().map(|t| t.next_obs.as_slice()), dim);
        let a = stack(batch.iter().map(|t| t.action.as_slice()), self.actor.output_dim());
        let an = self.act_batch(&self.actor_target, &xn)?;
        let qn = self
            .critic_target
            .predict(&concatenate![Axis(1), xn, an].view())?;
        let n = batch.len() as f64;
        let (q, cache) = self.critic.forward(&concatenate![Axis(1), x, a].view())?;
        let mut grad = Array2::zeros(q.dim());
        let mut loss = 0.0;
        for (i, t) in batch.iter().enumerate() {
            let bootstrap = if t.terminal { 0.0 } else { qn[[i, 0]] };
            let delta = q[[i, 0]] - (t.reward + self.gamma * bootstrap);
            loss += delta * delta / n;
            grad[[i, 0]] = 2.0 * delta / n;
        }
        if !loss.is_finite() || loss > 1e6 {
            return Ok(loss);
        }
        let (grads, _) = self.critic.backward(&cache, &grad.view())?;
        adam_step(&mut self.critic, &grads, &mut self.critic_adam)?;

        // maximise mean Q(s, μ(s))
        let (y, a_cache) = self.actor.forward(&x.view())?;
        let (c, h) = self.scale();
        let mu = y.mapv(|v| c + h * v);
        let (_, q_cache) = self.critic.forward(&concatenate![Axis(1), x, mu].view())?;
        let ones = Array2::from_elem((batch.len(), 1), -1.0 / n);
        let dq = self.critic.input_gradient(&q_cache, &ones.view())?;
        let dy = dq.slice(s![.., dim..]).mapv(|v| v * h);
        let (a_grads, _) = self.actor.backward(&a_cache, &dy.view())?;
        adam_step(&mut self.actor, &a_grads, &mut self.actor_adam)?;
        Ok(loss)
    }

    pub fn update_targets(&mut self) {
        soft_update(&mut self.actor_target, &self.actor, self.tau);
        soft_update(&mut self.critic_target, &self.critic, self.tau);
    }
}

impl Learner for DdpgLearner {
    fn explore(&mut self, obs: &[f64], t: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        let (c, h) = self.scale();
        let std = self.noise.value(t);
        let mu = self.actor.predict_one(obs)?;
        mu.into_iter()
            .map(|y| {
                let noise = if std > 0.0 {
                    Normal::new(0.0, std)
                        .map_err(|e| Error::InvalidConfig(e.to_string()))?
                        .sample(rng)
                } else {
                    0.0
                };
                Ok((c + h * y + noise).clamp(self.low, self.high))
            })
            .collect()
    }

    fn env_action(&self, stored: &[f64]) -> Action {
        Action::Continuous(stored.to_vec())
    }

    fn update(&mut self, buffer: &ReplayBuffer<Transition>, rng: &mut Rng) -> Result<f64> {
        let batch = buffer.sample(self.batch, rng);
        let loss = self.train_batch(&batch)?;
        self.update_targets();
        Ok(loss)
    }

    fn after_step(&mut self, _t: usize) {}
}

/// Deep deterministic policy gradient with annealed Gaussian exploration and
/// soft target updates.
pub fn train_ddpg(env: &mut dyn Environment, config: &AgentConfig, seed: u64) -> Result<TrainedAgent> {
    config.validate()?;
    let space = env.action_space();
    let mut config = config.clone();
    config.algo = Algo::Ddpg;
    let mut learner = DdpgLearner::new(env.obs_dim(), &space, &config, &mut substream(seed, "init", 0, 0))?;
    let log = run_training(env, &config, seed, &mut learner)?;
    let model = AgentModel::Ddpg {
        actor: learner.actor,
        critic: learner.critic,
    };
    let mut agent = TrainedAgent::new(env.name(), config, model, space);
    agent.log = log;
    Ok(agent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_mountaincar;
    use crate::neural::Trainable;
    use crate::rng::seeded;

    fn small_config() -> AgentConfig {
        let mut c = AgentConfig::preset("mountaincar-continuous", Algo::Ddpg).unwrap();
        c.hidden = vec![8];
        c.actor_hidden = vec![8];
        c
    }

    #[test]
    fn tau_one_copies_online_into_target() {
        let mut c = small_config();
        c.tau = 1.0;
        let space = make_mountaincar(true).action_space();
        let mut l = DdpgLearner::new(2, &space, &c, &mut seeded(1)).unwrap();
        let t = Transition {
            obs: vec![0.3, 0.5],
            action: vec![0.7],
            reward: -0.05,
            next_obs: vec![0.31, 0.52],
            terminal: false,
            episode_end: false,
        };
        l.train_batch(&[&t, &t]).unwrap();
        assert_ne!(l.actor_target, l.actor);
        l.update_targets();
        assert_eq!(l.actor_target.params(), l.actor.params());
        assert_eq!(l.critic_target.params(), l.critic.params());
    }

    #[test]
    fn zero_noise_replay_is_reproducible() {
        let mut c = small_config();
        c.exploration = Schedule {
            start: 0.0,
            end: 0.0,
            steps: 0,
        };
        c.steps = 300;
        c.warmup = 400;
        let run = |seed| {
            let mut env = make_mountaincar(true);
            train_ddpg(&mut env, &c, seed).unwrap()
        };
        let (a, b) = (run(5), run(5));
        assert_eq!(a.log, b.log);
        assert_eq!(a.model, b.model);
        // no learning before warmup: the actor is its initialisation
        let space = make_mountaincar(true).action_space();
        let fresh = DdpgLearner::new(2, &space, &c, &mut substream(5, "init", 0, 0)).unwrap();
        assert_eq!(
            a.model,
            AgentModel::Ddpg {
                actor: fresh.actor,
                critic: fresh.critic
            }
        );
    }

    #[test]
    fn exploration_stays_in_box() {
        let c = small_config();
        let space = make_mountaincar(true).action_space();
        let mut l = DdpgLearner::new(2, &space, &c, &mut seeded(2)).unwrap();
        let mut rng = seeded(3);
        for t in 0..200 {
            let a = l.explore(&[0.5, 0.5], t, &mut rng).unwrap();
            assert!(a[0].abs() <= 1.0);
        }
    }
}
