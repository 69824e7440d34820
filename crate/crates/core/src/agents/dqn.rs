use super::replay::{ReplayBuffer, Transition};
use super::train::{run_training, Learner};
use super::{AgentConfig, AgentModel, Algo, TrainedAgent};
use crate::envs::{Action, ActionSpace, Environment};
use crate::mdp::argmax_first;
use crate::neural::{adam_step, hard_update, Activation, AdamState, Mlp};
use crate::rng::{substream, Rng};
use crate::{Error, Result};
use ndarray::Array2;
use rand::Rng as _;

/// Online and target Q-networks with their optimiser.
#[derive(Debug, Clone)]
pub struct DqnLearner {
    pub online: Mlp,
    pub target: Mlp,
    adam: AdamState,
    gamma: f64,
    batch: usize,
    target_period: usize,
    exploration: super::Schedule,
    n_actions: usize,
}

/// Stacks rows into a `rows × dim` matrix.
pub(crate) fn stack<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, dim: usize) -> Array2<f64> {
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * dim);
    rows.for_each(|r| flat.extend_from_slice(r));
    Array2::from_shape_vec((n, dim), flat).expect("rows of equal width")
}

impl DqnLearner {
    pub fn new(obs_dim: usize, n_actions: usize, config: &AgentConfig, rng: &mut Rng) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(n_actions);
        let online = Mlp::new(&sizes, Activation::Relu, Activation::Linear, rng)?;
        Ok(Self {
            target: online.clone(),
            adam: AdamState::new(&online, config.lr).with_clip(config.grad_clip),
            online,
            gamma: config.gamma,
            batch: config.batch,
            target_period: config.target_period,
            exploration: config.exploration,
            n_actions,
        })
    }

    /// One squared-TD step on `batch`; returns the mean loss.
    pub fn train_batch(&mut self, batch: &[&Transition]) -> Result<f64> {
        let dim = self.online.input_dim();
        let x = stack(batch.iter().map(|t| t.obs.as_slice()), dim);
        let xn = stack(batch.iter().map(|t| t.next_obs.as_slice()), dim);
        let (q, cache) = self.online.forward(&x.view())?;
        let qn = self.target.predict(&xn.view())?;
        let n = batch.len() as f64;
        let mut grad = Array2::zeros(q.dim());
        let mut loss = 0.0;
        for (i, t) in batch.iter().enumerate() {
            let a = t.action[0] as usize;
            let bootstrap = if t.terminal {
                0.0
            } else {
                qn.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            };
            let delta = q[[i, a]] - (t.reward + self.gamma * bootstrap);
            loss += delta * delta / n;
            grad[[i, a]] = 2.0 * delta / n;
        }
        if !loss.is_finite() || loss > 1e6 {
            return Ok(loss);
        }
        let (grads, _) = self.online.backward(&cache, &grad.view())?;
        adam_step(&mut self.online, &grads, &mut self.adam)?;
        Ok(loss)
    }

    /// Copies the online weights into the target after every
    /// `target_period`-th step.
    pub fn sync_target(&mut self, t: usize) {
        if (t + 1) % self.target_period == 0 {
            hard_update(&mut self.target, &self.online);
        }
    }
}

impl Learner for DqnLearner {
    fn explore(&mut self, obs: &[f64], t: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        let a = if rng.random::<f64>() < self.exploration.value(t) {
            rng.random_range(0..self.n_actions)
        } else {
            argmax_first(&self.online.predict_one(obs)?)
        };
        Ok(vec![a as f64])
    }

    fn env_action(&self, stored: &[f64]) -> Action {
        Action::Discrete(stored[0] as usize)
    }

    fn update(&mut self, buffer: &ReplayBuffer<Transition>, rng: &mut Rng) -> Result<f64> {
        let batch = buffer.sample(self.batch, rng);
        self.train_batch(&batch)
    }

    fn after_step(&mut self, t: usize) {
        self.sync_target(t);
    }
}

pub(crate) fn discrete_actions(env: &dyn Environment) -> Result<usize> {
    match env.action_space() {
        ActionSpace::Discrete(n) => Ok(n),
        ActionSpace::Continuous { .. } => Err(Error::Mismatch(format!(
            "`{}` has continuous actions; value-based agents need discrete ones",
            env.name()
        ))),
    }
}

/// Deep Q-learning with ε-greedy exploration, uniform replay and a
/// periodically refreshed target network.
pub fn train_dqn(env: &mut dyn Environment, config: &AgentConfig, seed: u64) -> Result<TrainedAgent> {
    config.validate()?;
    let n_actions = discrete_actions(env)?;
    let mut config = config.clone();
    config.algo = Algo::Dqn;
    let mut learner = DqnLearner::new(env.obs_dim(), n_actions, &config, &mut substream(seed, "init", 0, 0))?;
    let log = run_training(env, &config, seed, &mut learner)?;
    let mut agent = TrainedAgent::new(env.name(), config, AgentModel::Dqn(learner.online), env.action_space());
    agent.log = log;
    Ok(agent)
}
