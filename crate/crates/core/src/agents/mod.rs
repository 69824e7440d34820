//! Main-agent training (DQN, DDPG, a recurrent DQN variant) and evaluation rollouts.
//!
//! Value-based agents expose `π(·|s)` as the softmax of their Q-values at
//! temperature 1.

mod config;
mod ddpg;
mod dqn;
mod drqn;
mod eval;
mod persist;
mod replay;
mod train;

pub use config::{AgentConfig, Algo, Schedule};
pub use ddpg::{train_ddpg, DdpgLearner};
pub use dqn::{train_dqn, DqnLearner};
pub use drqn::{train_drqn_lite, DrqnLearner};
pub use eval::{evaluate_policy, random_action, EpisodeResult, ObservationAttack};
pub use replay::{ReplayBuffer, Transition};
pub use train::{EpisodeStat, TrainingLog};
pub(crate) use dqn::stack;
pub(crate) use train::divergence_guard;

use crate::envs::{Action, ActionSpace, Gridworld};
use crate::mdp::{argmax_first, TabularMdp, TabularPolicy};
use crate::neural::{softmax_temp, softmax_temp_backward, Mlp, RecurrentCell};
use crate::rng::Rng;
use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng as _;

/// Anything that picks actions from observations.
pub trait Agent {
    fn obs_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    /// Clears per-episode memory.
    fn reset(&mut self);
    fn act(&mut self, obs: &[f64], rng: &mut Rng) -> Result<Action>;
    /// Gradient access for white-box attacks, when the agent allows it.
    fn differentiable(&self) -> Option<&dyn DifferentiablePolicy> {
        None
    }
}

/// Read access to a policy network and its input gradients.
pub trait DifferentiablePolicy {
    fn obs_dim(&self) -> usize;
    /// Width of [`DifferentiablePolicy::action_repr_batch`] rows.
    fn action_dim(&self) -> usize;
    /// `π(·|s)`; discrete agents only.
    fn action_probs(&self, obs: &[f64]) -> Result<Vec<f64>>;
    /// `∇_s` of the cross-entropy between `π(·|s)` and the one-hot `target`.
    fn cross_entropy_gradient(&self, obs: &[f64], target: usize) -> Result<Vec<f64>>;
    /// Differentiable action per row: action probabilities for discrete
    /// agents, the actor output for continuous ones.
    fn action_repr_batch(&self, obs: &ArrayView2<f64>) -> Result<Array2<f64>>;
    /// Vector-Jacobian product of [`DifferentiablePolicy::action_repr_batch`]
    /// with respect to the observations.
    fn action_repr_vjp_batch(
        &self,
        obs: &ArrayView2<f64>,
        grad: &ArrayView2<f64>,
    ) -> Result<Array2<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentModel {
    Dqn(Mlp),
    Ddpg { actor: Mlp, critic: Mlp },
    Drqn(RecurrentCell),
}

/// A trained main agent with its configuration and training curve.
#[derive(Debug, Clone)]
pub struct TrainedAgent {
    pub env: String,
    pub config: AgentConfig,
    pub model: AgentModel,
    pub log: TrainingLog,
    action_space: ActionSpace,
    hidden: Vec<f64>,
}

fn row(x: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, x.len()), x).expect("row vector")
}

/// Affine map of a tanh output in `[-1,1]` onto the action box.
pub(crate) fn box_scale(space: &ActionSpace) -> (f64, f64) {
    match space {
        ActionSpace::Continuous { low, high, .. } => ((high + low) / 2.0, (high - low) / 2.0),
        ActionSpace::Discrete(_) => (0.0, 1.0),
    }
}

impl TrainedAgent {
    pub fn new(env: &str, config: AgentConfig, model: AgentModel, action_space: ActionSpace) -> Self {
        let hidden = match &model {
            AgentModel::Drqn(cell) => vec![0.0; cell.hidden_dim()],
            _ => Vec::new(),
        };
        Self {
            env: env.to_string(),
            config,
            model,
            log: TrainingLog::default(),
            action_space,
            hidden,
        }
    }

    pub fn algo(&self) -> Algo {
        match self.model {
            AgentModel::Dqn(_) => Algo::Dqn,
            AgentModel::Ddpg { .. } => Algo::Ddpg,
            AgentModel::Drqn(_) => Algo::Drqn,
        }
    }

    pub fn hidden_state(&self) -> &[f64] {
        &self.hidden
    }

    /// Q-values at `obs`; recurrent agents read from the current hidden state
    /// without advancing it.
    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        match &self.model {
            AgentModel::Dqn(q) => q.predict_one(obs),
            AgentModel::Drqn(cell) => Ok(cell.step(&self.hidden, obs)?.1),
            AgentModel::Ddpg { .. } => Err(Error::Mismatch(
                "Q-values over discrete actions need a value-based agent".into(),
            )),
        }
    }

    /// Deterministic action `π(s)`, without advancing recurrent state.
    pub fn greedy(&self, obs: &[f64]) -> Result<Action> {
        match &self.model {
            AgentModel::Ddpg { actor, .. } => {
                let (c, h) = box_scale(&self.action_space);
                let y = actor.predict_one(obs)?;
                Ok(Action::Continuous(y.iter().map(|v| c + h * v).collect()))
            }
            _ => Ok(Action::Discrete(argmax_first(&self.q_values(obs)?))),
        }
    }

    fn hidden_batch(&self, rows: usize) -> Array2<f64> {
        let h = ArrayView2::from_shape((1, self.hidden.len()), &self.hidden).expect("row");
        h.broadcast((rows, self.hidden.len()))
            .expect("broadcast")
            .to_owned()
    }

    /// Network output per row: Q-values or the raw actor output.
    fn outputs_with_grad(
        &self,
        obs: &ArrayView2<f64>,
        out_grad: Option<&ArrayView2<f64>>,
    ) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
        match &self.model {
            AgentModel::Dqn(q) | AgentModel::Ddpg { actor: q, .. } => {
                let (out, cache) = q.forward(obs)?;
                let g = out_grad.map(|g| q.input_gradient(&cache, g)).transpose()?;
                Ok((out, g))
            }
            AgentModel::Drqn(cell) => {
                let h0 = self.hidden_batch(obs.nrows());
                let (outs, cache) = cell.forward_sequence(&[obs.to_owned()], Some(h0))?;
                let g = match out_grad {
                    Some(g) => {
                        let (_, mut dx) = cell.backward_sequence(&cache, &[Some(g.to_owned())])?;
                        Some(dx.remove(0))
                    }
                    None => None,
                };
                Ok((outs.into_iter().next().expect("one step"), g))
            }
        }
    }
}

impl Agent for TrainedAgent {
    fn obs_dim(&self) -> usize {
        match &self.model {
            AgentModel::Dqn(q) => q.input_dim(),
            AgentModel::Ddpg { actor, .. } => actor.input_dim(),
            AgentModel::Drqn(cell) => cell.input_dim(),
        }
    }

    fn action_space(&self) -> ActionSpace {
        self.action_space.clone()
    }

    fn reset(&mut self) {
        self.hidden.iter_mut().for_each(|h| *h = 0.0);
    }

    fn act(&mut self, obs: &[f64], _rng: &mut Rng) -> Result<Action> {
        if let AgentModel::Drqn(cell) = &self.model {
            let (h, q) = cell.step(&self.hidden, obs)?;
            self.hidden = h;
            return Ok(Action::Discrete(argmax_first(&q)));
        }
        self.greedy(obs)
    }

    fn differentiable(&self) -> Option<&dyn DifferentiablePolicy> {
        Some(self)
    }
}

impl DifferentiablePolicy for TrainedAgent {
    fn obs_dim(&self) -> usize {
        Agent::obs_dim(self)
    }

    fn action_dim(&self) -> usize {
        self.action_space.width()
    }

    fn action_probs(&self, obs: &[f64]) -> Result<Vec<f64>> {
        softmax_temp(&self.q_values(obs)?, 1.0)
    }

    fn cross_entropy_gradient(&self, obs: &[f64], target: usize) -> Result<Vec<f64>> {
        if !self.action_space.is_discrete() {
            return Err(Error::Mismatch(
                "cross-entropy gradients need a discrete action distribution".into(),
            ));
        }
        let q = self.q_values(obs)?;
        if target >= q.len() {
            return Err(Error::DimensionMismatch {
                what: "target action",
                expected: q.len(),
                found: target,
            });
        }
        let (_, grad_logits) = crate::neural::cross_entropy_onehot(&q, target, 1.0)?;
        let g = ArrayView2::from_shape((1, grad_logits.len()), &grad_logits).expect("row");
        let (_, dx) = self.outputs_with_grad(&row(obs), Some(&g))?;
        Ok(dx.expect("requested").into_raw_vec_and_offset().0)
    }

    fn action_repr_batch(&self, obs: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let (out, _) = self.outputs_with_grad(obs, None)?;
        self.repr_from_outputs(out)
    }

    fn action_repr_vjp_batch(
        &self,
        obs: &ArrayView2<f64>,
        grad: &ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        let (out, _) = self.outputs_with_grad(obs, None)?;
        let repr = self.repr_from_outputs(out)?;
        if grad.dim() != repr.dim() {
            return Err(Error::DimensionMismatch {
                what: "action representation gradient",
                expected: repr.len(),
                found: grad.len(),
            });
        }
        let mut out_grad = Array2::zeros(repr.dim());
        if self.action_space.is_discrete() {
            for i in 0..repr.nrows() {
                let p = repr.row(i).to_vec();
                let g = grad.row(i).to_vec();
                let dz = softmax_temp_backward(&p, &g, 1.0);
                out_grad.row_mut(i).assign(&Array1::from(dz));
            }
        } else {
            let (_, h) = box_scale(&self.action_space);
            out_grad.assign(&grad.mapv(|v| v * h));
        }
        let (_, dx) = self.outputs_with_grad(obs, Some(&out_grad.view()))?;
        Ok(dx.expect("requested"))
    }
}

impl TrainedAgent {
    fn repr_from_outputs(&self, mut out: Array2<f64>) -> Result<Array2<f64>> {
        if self.action_space.is_discrete() {
            for mut r in out.rows_mut() {
                let sm = softmax_temp(&r.to_vec(), 1.0)?;
                r.assign(&Array1::from(sm));
            }
        } else {
            let (c, h) = box_scale(&self.action_space);
            out.mapv_inplace(|v| c + h * v);
        }
        Ok(out)
    }
}

/// A tabular gridworld policy acting on normalized observations; stochastic
/// rows are sampled.
#[derive(Debug, Clone)]
pub struct TabularAgent {
    grid: Gridworld,
    mdp: TabularMdp,
    policy: TabularPolicy,
}

impl TabularAgent {
    pub fn new(grid: Gridworld, policy: TabularPolicy) -> Result<Self> {
        let mdp = grid.mdp();
        policy.check_against(&mdp)?;
        Ok(Self { grid, mdp, policy })
    }

    pub fn policy(&self) -> &TabularPolicy {
        &self.policy
    }

    pub fn grid(&self) -> &Gridworld {
        &self.grid
    }
}

impl Agent for TabularAgent {
    fn obs_dim(&self) -> usize {
        2
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(4)
    }

    fn reset(&mut self) {}

    fn act(&mut self, obs: &[f64], rng: &mut Rng) -> Result<Action> {
        let s = self.grid.state_from_observation(obs);
        let probs = self.policy.probs(s);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut index = probs.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                index = i;
                break;
            }
        }
        Ok(Action::Discrete(self.mdp.actions(s)[index]))
    }
}
