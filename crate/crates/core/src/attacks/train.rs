use super::neural::{actor_objective_gradient, critic_scale, Ball, CriticInput};
use super::{AttackConfig, AttackKind, ExplorationMode, NeuralAttack};
use crate::agents::{
    divergence_guard, stack, Agent, DifferentiablePolicy, EpisodeStat, ReplayBuffer, TrainingLog,
    Transition,
};
use crate::envs::{EnvStep, Environment};
use crate::mdp::argmin_first;
use crate::neural::{adam_step, soft_update, Activation, AdamState, Mlp};
use crate::rng::{stream_id, substream, Rng};
use crate::{Error, Result};
use ndarray::{Array2, ArrayView2};
use rand::Rng as _;

/// The environment as the adversary sees it: it proposes an observation for
/// the agent and gets back the agent's reward and the next true state.
pub trait AttackEnvironment {
    fn name(&self) -> &str;
    fn obs_dim(&self) -> usize;
    fn seed(&mut self, seed: u64);
    fn reset(&mut self) -> Vec<f64>;
    /// Shows `perturbed` to the agent and advances the true state.
    fn step(&mut self, perturbed: &[f64]) -> Result<EnvStep>;
    /// Gradient access to the agent, if granted.
    fn policy(&self) -> Option<&dyn DifferentiablePolicy> {
        None
    }
}

/// A fixed agent acting inside an environment, driven by perturbed observations.
pub struct AgentInTheLoop<'a> {
    env: &'a mut dyn Environment,
    agent: &'a mut dyn Agent,
    rng: Rng,
    expose_policy: bool,
}

impl<'a> AgentInTheLoop<'a> {
    /// `expose_policy` grants the adversary gradient access to the agent.
    pub fn new(env: &'a mut dyn Environment, agent: &'a mut dyn Agent, expose_policy: bool) -> Result<Self> {
        if env.obs_dim() != agent.obs_dim() || env.action_space() != agent.action_space() {
            return Err(Error::Mismatch(format!(
                "agent does not fit `{}`",
                env.name()
            )));
        }
        Ok(Self {
            env,
            agent,
            rng: substream(0, "agent-in-loop", 0, 0),
            expose_policy,
        })
    }
}

impl AttackEnvironment for AgentInTheLoop<'_> {
    fn name(&self) -> &str {
        self.env.name()
    }

    fn obs_dim(&self) -> usize {
        self.env.obs_dim()
    }

    fn seed(&mut self, seed: u64) {
        self.env.seed(seed);
        self.rng = substream(seed, "agent-in-loop", 0, 0);
    }

    fn reset(&mut self) -> Vec<f64> {
        self.agent.reset();
        self.env.reset()
    }

    fn step(&mut self, perturbed: &[f64]) -> Result<EnvStep> {
        let action = self.agent.act(perturbed, &mut self.rng)?;
        self.env.step(&action)
    }

    fn policy(&self) -> Option<&dyn DifferentiablePolicy> {
        if self.expose_policy {
            self.agent.differentiable()
        } else {
            None
        }
    }
}

/// Gradient-informed mixing of exploration noise.
///
/// `ω = max π − min π`. When `explore` is set the result is
/// `(1−ω)·e + ω·g(−∇J)` with `g(x) = x/‖x‖₂`; otherwise `e`.
pub fn mix_gradient_noise(e: &[f64], probs: &[f64], grad: &[f64], explore: bool) -> Vec<f64> {
    if !explore {
        return e.to_vec();
    }
    let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = probs.iter().cloned().fold(f64::INFINITY, f64::min);
    let omega = max - min;
    let n = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    e.iter()
        .zip(grad)
        .map(|(ei, gi)| {
            let dir = if n > 0.0 { -gi / n } else { 0.0 };
            (1.0 - omega) * ei + omega * dir
        })
        .collect()
}

/// Exploration noise for one step: uniform on `[−width, width]` per
/// dimension, optionally mixed with the agent's cross-entropy gradient
/// towards its least likely action.
pub fn exploration_noise(
    mode: ExplorationMode,
    obs: &[f64],
    policy: Option<&dyn DifferentiablePolicy>,
    width: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let e: Vec<f64> = obs
        .iter()
        .map(|_| if width > 0.0 { rng.random_range(-width..=width) } else { 0.0 })
        .collect();
    match mode {
        ExplorationMode::Uniform => Ok(e),
        ExplorationMode::GradientBased { p } => {
            let explore = rng.random_bool(p);
            if !explore {
                return Ok(e);
            }
            let policy = policy.ok_or_else(|| {
                Error::Mismatch("gradient-based exploration needs gradient access to the agent".into())
            })?;
            let probs = policy.action_probs(obs)?;
            let grad = policy.cross_entropy_gradient(obs, argmin_first(&probs))?;
            Ok(mix_gradient_noise(&e, &probs, &grad, true))
        }
    }
}

/// Online and target networks with their optimisers.
struct AttackLearner {
    actor: Mlp,
    critic: Mlp,
    actor_target: Mlp,
    critic_target: Mlp,
    actor_adam: AdamState,
    critic_adam: AdamState,
    kind: AttackKind,
    ball: Ball,
    scale: f64,
    gamma: f64,
    tau: f64,
}

impl AttackLearner {
    fn input<'a>(&self, policy: Option<&'a dyn DifferentiablePolicy>) -> CriticInput<'a> {
        CriticInput {
            kind: self.kind,
            scale: self.scale,
            policy,
        }
    }

    /// Critic regression then one actor ascent step; returns the critic loss.
    fn train_batch(&mut self, batch: &[&Transition], policy: Option<&dyn DifferentiablePolicy>) -> Result<f64> {
        let d = self.actor.input_dim();
        let input = self.input(policy);
        let x = stack(batch.iter().map(|t| t.obs.as_slice()), d);
        let xn = stack(batch.iter().map(|t| t.next_obs.as_slice()), d);
        let a = stack(
            batch.iter().map(|t| t.action.as_slice()),
            batch[0].action.len(),
        );
        let raw_n = self.actor_target.predict(&xn.view())?;
        let (sbar_n, _) = self.ball.apply_batch(&xn, &raw_n);
        let block_n = input.action_block(&xn, &sbar_n)?;
        let qn = self.critic_target.predict(&input.input(&xn, &block_n).view())?;
        let block = match self.kind {
            AttackKind::BlackBox => (&a - &x) / self.scale,
            AttackKind::WhiteBox => a,
        };
        let (q, cache) = self.critic.forward(&input.input(&x, &block).view())?;
        let n = batch.len() as f64;
        let mut grad = Array2::zeros(q.dim());
        let mut loss = 0.0;
        for (i, t) in batch.iter().enumerate() {
            let boot = if t.terminal { 0.0 } else { qn[[i, 0]] };
            // black-box: y = r̄ + γQ⁻, loss (Q − y)²;
            // white-box: y = r̄ − γQ⁻, loss (y + Q)²
            let residual = match self.kind {
                AttackKind::BlackBox => q[[i, 0]] - (t.reward + self.gamma * boot),
                AttackKind::WhiteBox => (t.reward - self.gamma * boot) + q[[i, 0]],
            };
            loss += residual * residual / n;
            grad[[i, 0]] = 2.0 * residual / n;
        }
        if !loss.is_finite() || loss > 1e6 {
            return Ok(loss);
        }
        let (grads, _) = self.critic.backward(&cache, &grad.view())?;
        adam_step(&mut self.critic, &grads, &mut self.critic_adam)?;

        let mut actor_grads = actor_objective_gradient(&self.actor, &self.critic, self.ball, input, &x)?;
        actor_grads.scale(-1.0);
        adam_step(&mut self.actor, &actor_grads, &mut self.actor_adam)?;
        soft_update(&mut self.actor_target, &self.actor, self.tau);
        soft_update(&mut self.critic_target, &self.critic, self.tau);
        Ok(loss)
    }
}

/// Trains an adversary that sees only states, its own perturbations and the
/// agent's rewards (negated). Gradient-based exploration additionally reads
/// the agent's policy gradient when `env` grants it.
pub fn train_attack_blackbox(
    env: &mut dyn AttackEnvironment,
    config: &AttackConfig,
    seed: u64,
) -> Result<NeuralAttack> {
    train(env, AttackKind::BlackBox, config, seed)
}

/// Trains an adversary whose critic is defined over the agent's actions and
/// whose actor gradient runs through the agent's policy network.
pub fn train_attack_whitebox(
    env: &mut dyn AttackEnvironment,
    config: &AttackConfig,
    seed: u64,
) -> Result<NeuralAttack> {
    if env.policy().is_none() {
        return Err(Error::Mismatch(
            "white-box training needs gradient access to the agent".into(),
        ));
    }
    train(env, AttackKind::WhiteBox, config, seed)
}

fn train(
    env: &mut dyn AttackEnvironment,
    kind: AttackKind,
    config: &AttackConfig,
    seed: u64,
) -> Result<NeuralAttack> {
    config.validate()?;
    let d = env.obs_dim();
    let block_dim = match kind {
        AttackKind::BlackBox => d,
        AttackKind::WhiteBox => env.policy().map_or(0, |p| p.action_dim()),
    };
    let mut init = substream(seed, "attack-init", 0, 0);
    let mut a_sizes = vec![d];
    a_sizes.extend_from_slice(&config.hidden);
    a_sizes.push(d);
    let mut c_sizes = vec![d + block_dim];
    c_sizes.extend_from_slice(&config.hidden);
    c_sizes.push(1);
    let actor = Mlp::new(&a_sizes, Activation::Relu, Activation::Linear, &mut init)?;
    let critic = Mlp::new(&c_sizes, Activation::Relu, Activation::Linear, &mut init)?;
    let mut learner = AttackLearner {
        actor_adam: AdamState::new(&actor, config.actor_lr).with_clip(config.grad_clip),
        critic_adam: AdamState::new(&critic, config.critic_lr).with_clip(config.grad_clip),
        actor_target: actor.clone(),
        critic_target: critic.clone(),
        actor,
        critic,
        kind,
        ball: Ball {
            epsilon: config.epsilon,
            lambda: config.lambda,
            norm: config.norm,
        },
        scale: critic_scale(config.epsilon),
        gamma: config.gamma,
        tau: config.tau,
    };

    let mut rng = substream(seed, "attack-train", 0, 0);
    env.seed(stream_id("attack-env", seed, 0));
    let mut buffer = ReplayBuffer::new(config.memory);
    let mut log = TrainingLog::default();
    let mut obs = env.reset();
    let (mut ret, mut length, mut loss_sum, mut loss_count) = (0.0, 0usize, 0.0, 0usize);
    for t in 0..config.steps {
        let noise = exploration_noise(config.exploration, &obs, env.policy(), config.noise.value(t), &mut rng)?;
        let raw: Vec<f64> = learner
            .actor
            .predict_one(&obs)?
            .iter()
            .zip(&noise)
            .map(|(x, e)| x + e)
            .collect();
        let sbar = learner.ball.apply(&obs, &raw);
        let stored = match kind {
            AttackKind::BlackBox => sbar.clone(),
            AttackKind::WhiteBox => {
                let p = env.policy().expect("checked on entry");
                let row = ArrayView2::from_shape((1, d), &sbar).expect("row");
                p.action_repr_batch(&row)?.row(0).to_vec()
            }
        };
        let step = env.step(&sbar)?;
        ret += step.reward;
        length += 1;
        buffer.push(Transition {
            obs: std::mem::take(&mut obs),
            action: stored,
            reward: -step.reward,
            next_obs: step.observation.clone(),
            terminal: step.done && !step.truncated,
            episode_end: step.done,
        });
        obs = step.observation;
        if t >= config.warmup && buffer.len() >= config.batch {
            let batch = buffer.sample(config.batch, &mut rng);
            let loss = learner.train_batch(&batch, env.policy())?;
            divergence_guard(t, loss)?;
            loss_sum += loss;
            loss_count += 1;
        }
        if step.done {
            log.episodes.push(EpisodeStat {
                episode: log.episodes.len(),
                end_step: t + 1,
                ret,
                length,
                mean_loss: if loss_count > 0 {
                    loss_sum / loss_count as f64
                } else {
                    f64::NAN
                },
            });
            (ret, length, loss_sum, loss_count) = (0.0, 0, 0.0, 0);
            obs = env.reset();
        }
    }
    Ok(NeuralAttack {
        kind,
        env: env.name().to_string(),
        config: config.clone(),
        actor: learner.actor,
        critic: learner.critic,
        epsilon: config.epsilon,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixing_follows_the_formula() {
        let e = [0.3, -0.2];
        let g = [3.0, 4.0];
        assert_eq!(mix_gradient_noise(&e, &[0.5, 0.5], &g, true), e.to_vec());
        assert_eq!(mix_gradient_noise(&e, &[1.0, 0.0], &g, false), e.to_vec());
        let out = mix_gradient_noise(&e, &[1.0, 0.0], &g, true);
        assert!((out[0] + 0.6).abs() < 1e-15 && (out[1] + 0.8).abs() < 1e-15);
        let out = mix_gradient_noise(&e, &[0.75, 0.25], &g, true);
        assert!((out[0] - (0.5 * 0.3 - 0.5 * 0.6)).abs() < 1e-15);
    }

    #[test]
    fn uniform_noise_respects_its_width() {
        let mut rng = crate::rng::seeded(2);
        for _ in 0..100 {
            let e = exploration_noise(ExplorationMode::Uniform, &[0.0; 3], None, 0.3, &mut rng).unwrap();
            assert!(e.iter().all(|v| v.abs() <= 0.3));
        }
        let zero = exploration_noise(ExplorationMode::Uniform, &[0.0; 2], None, 0.0, &mut rng).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);
        assert!(exploration_noise(
            ExplorationMode::GradientBased { p: 1.0 },
            &[0.0],
            None,
            0.1,
            &mut rng
        )
        .is_err());
    }
}
