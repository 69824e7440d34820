use super::dqn::discrete_actions;
use super::replay::{ReplayBuffer, Transition};
use super::train::{run_training, Learner};
use super::{AgentConfig, AgentModel, Algo, Schedule, TrainedAgent};
use crate::envs::{Action, Environment};
use crate::mdp::argmax_first;
use crate::neural::{adam_step, hard_update, AdamState, RecurrentCell};
use crate::rng::{substream, Rng};
use crate::Result;
use ndarray::Array2;
use rand::Rng as _;

/// Recurrent Q-learning on short subsequences. Both the online and the target
/// pass start from a zero hidden state at the window start; the target pass
/// reads the successor observations of the same window.
#[derive(Debug, Clone)]
pub struct DrqnLearner {
    pub online: RecurrentCell,
    pub target: RecurrentCell,
    adam: AdamState,
    gamma: f64,
    batch: usize,
    window: usize,
    target_period: usize,
    exploration: Schedule,
    n_actions: usize,
    hidden: Vec<f64>,
}

impl DrqnLearner {
    pub fn new(obs_dim: usize, n_actions: usize, config: &AgentConfig, rng: &mut Rng) -> Result<Self> {
        let online = RecurrentCell::new(obs_dim, config.recurrent_hidden, &config.hidden, n_actions, rng)?;
        Ok(Self {
            target: online.clone(),
            adam: AdamState::new(&online, config.lr).with_clip(config.grad_clip),
            hidden: vec![0.0; config.recurrent_hidden],
            online,
            gamma: config.gamma,
            batch: config.batch,
            window: config.window,
            target_period: config.target_period,
            exploration: config.exploration,
            n_actions,
        })
    }

    /// One squared-TD step over a batch of windows, padded at the end with
    /// zero-weight steps. Returns the mean loss over real steps.
    pub fn train_windows(&mut self, windows: &[Vec<&Transition>]) -> Result<f64> {
        let dim = self.online.input_dim();
        let b = windows.len();
        let steps = windows.iter().map(Vec::len).max().unwrap_or(0);
        fn pick<'a>(w: &[&'a Transition], t: usize) -> &'a Transition {
            w[t.min(w.len() - 1)]
        }
        let mut xs = Vec::with_capacity(steps);
        let mut xns = Vec::with_capacity(steps);
        for t in 0..steps {
            xs.push(Array2::from_shape_fn((b, dim), |(i, j)| pick(&windows[i], t).obs[j]));
            xns.push(Array2::from_shape_fn((b, dim), |(i, j)| {
                pick(&windows[i], t).next_obs[j]
            }));
        }
        let (qs, cache) = self.online.forward_sequence(&xs, None)?;
        let (qns, _) = self.target.forward_sequence(&xns, None)?;
        let count: usize = windows.iter().map(Vec::len).sum();
        let n = count as f64;
        let mut loss = 0.0;
        let mut grads = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut g = Array2::zeros((b, self.n_actions));
            for (i, w) in windows.iter().enumerate() {
                if t >= w.len() {
                    continue;
                }
                let tr = w[t];
                let a = tr.action[0] as usize;
                let bootstrap = if tr.terminal {
                    0.0
                } else {
                    qns[t].row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                };
                let delta = qs[t][[i, a]] - (tr.reward + self.gamma * bootstrap);
                loss += delta * delta / n;
                g[[i, a]] = 2.0 * delta / n;
            }
            grads.push(Some(g));
        }
        if !loss.is_finite() || loss > 1e6 {
            return Ok(loss);
        }
        let (pg, _) = self.online.backward_sequence(&cache, &grads)?;
        adam_step(&mut self.online, &pg, &mut self.adam)?;
        Ok(loss)
    }

    pub fn sync_target(&mut self, t: usize) {
        if (t + 1) % self.target_period == 0 {
            hard_update(&mut self.target, &self.online);
        }
    }
}

impl Learner for DrqnLearner {
    fn explore(&mut self, obs: &[f64], t: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        let (h, q) = self.online.step(&self.hidden, obs)?;
        self.hidden = h;
        let a = if rng.random::<f64>() < self.exploration.value(t) {
            rng.random_range(0..self.n_actions)
        } else {
            argmax_first(&q)
        };
        Ok(vec![a as f64])
    }

    fn env_action(&self, stored: &[f64]) -> Action {
        Action::Discrete(stored[0] as usize)
    }

    fn episode_start(&mut self) {
        self.hidden.iter_mut().for_each(|h| *h = 0.0);
    }

    fn update(&mut self, buffer: &ReplayBuffer<Transition>, rng: &mut Rng) -> Result<f64> {
        let windows: Vec<Vec<&Transition>> = (0..self.batch)
            .map(|_| buffer.sample_sequence(self.window, rng))
            .collect();
        self.train_windows(&windows)
    }

    fn after_step(&mut self, t: usize) {
        self.sync_target(t);
    }
}

/// Recurrent DQN variant: an Elman cell Q-network trained on replayed
/// subsequences; the hidden state is carried across each evaluation episode.
pub fn train_drqn_lite(env: &mut dyn Environment, config: &AgentConfig, seed: u64) -> Result<TrainedAgent> {
    config.validate()?;
    let n_actions = discrete_actions(env)?;
    let mut config = config.clone();
    config.algo = Algo::Drqn;
    let mut learner = DrqnLearner::new(env.obs_dim(), n_actions, &config, &mut substream(seed, "init", 0, 0))?;
    let log = run_training(env, &config, seed, &mut learner)?;
    let mut agent = TrainedAgent::new(env.name(), config, AgentModel::Drqn(learner.online), env.action_space());
    agent.log = log;
    Ok(agent)
}
