use super::AttackConfig;
use crate::agents::{Agent, DifferentiablePolicy, ObservationAttack, TrainingLog};
use crate::config::KeyValues;
use crate::envs::Norm;
use crate::neural::{project_ball, project_ball_backward, Mlp, ParamGrads};
use crate::rng::Rng;
use crate::{Error, Result};
use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

/// Which information the adversary's critic sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    /// Critic over (true state, perturbed observation); no access to the agent.
    BlackBox,
    /// Critic over (true state, agent action); gradients flow through the agent.
    WhiteBox,
}

impl AttackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::BlackBox => "blackbox",
            AttackKind::WhiteBox => "whitebox",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blackbox" => Ok(AttackKind::BlackBox),
            "whitebox" => Ok(AttackKind::WhiteBox),
            _ => Err(Error::UnknownName {
                kind: "attack algorithm",
                name: s.to_string(),
            }),
        }
    }
}

/// The perturbation layer `s̄ = clamp(s + l_Π(x))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Ball {
    pub epsilon: f64,
    pub lambda: f64,
    pub norm: Norm,
}

impl Ball {
    pub fn apply(&self, s: &[f64], raw: &[f64]) -> Vec<f64> {
        let p = project_ball(raw, self.epsilon, self.lambda, self.norm);
        s.iter().zip(&p).map(|(a, b)| (a + b).clamp(0.0, 1.0)).collect()
    }

    /// Row-wise [`Ball::apply`], plus the clamp mask (1 where the sum stayed
    /// inside the unit box).
    pub fn apply_batch(&self, s: &Array2<f64>, raw: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut out = Array2::zeros(s.dim());
        let mut mask = Array2::zeros(s.dim());
        for i in 0..s.nrows() {
            let p = project_ball(&raw.row(i).to_vec(), self.epsilon, self.lambda, self.norm);
            for j in 0..s.ncols() {
                let v = s[[i, j]] + p[j];
                out[[i, j]] = v.clamp(0.0, 1.0);
                mask[[i, j]] = if (0.0..=1.0).contains(&v) { 1.0 } else { 0.0 };
            }
        }
        (out, mask)
    }

    /// Maps `∂/∂s̄` back to the pre-projection actor output.
    pub fn backward(&self, raw: &Array2<f64>, mask: &Array2<f64>, grad: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(raw.dim());
        for i in 0..raw.nrows() {
            let g: Vec<f64> = grad.row(i).iter().zip(mask.row(i)).map(|(a, b)| a * b).collect();
            let back = project_ball_backward(&raw.row(i).to_vec(), self.epsilon, self.lambda, self.norm, &g);
            out.row_mut(i).assign(&Array1::from(back));
        }
        out
    }
}

/// Critic-side geometry shared by the trainer and gradient checks.
#[derive(Clone, Copy)]
pub(crate) struct CriticInput<'a> {
    pub kind: AttackKind,
    /// Black-box critics see the displacement divided by this scale.
    pub scale: f64,
    pub policy: Option<&'a dyn DifferentiablePolicy>,
}

impl CriticInput<'_> {
    fn policy(&self) -> Result<&dyn DifferentiablePolicy> {
        self.policy
            .ok_or_else(|| Error::Mismatch("white-box attacks need gradient access to the agent".into()))
    }

    /// Second block of the critic input: `(s̄ − s)/scale` or `π(s̄)`.
    pub fn action_block(&self, s: &Array2<f64>, sbar: &Array2<f64>) -> Result<Array2<f64>> {
        match self.kind {
            AttackKind::BlackBox => Ok((sbar - s) / self.scale),
            AttackKind::WhiteBox => self.policy()?.action_repr_batch(&sbar.view()),
        }
    }

    pub fn input(&self, s: &Array2<f64>, block: &Array2<f64>) -> Array2<f64> {
        concatenate![Axis(1), s.view(), block.view()]
    }

    /// `∂/∂s̄` from the gradient with respect to the action block.
    pub fn block_backward(&self, sbar: &Array2<f64>, grad: &Array2<f64>) -> Result<Array2<f64>> {
        match self.kind {
            AttackKind::BlackBox => Ok(grad / self.scale),
            AttackKind::WhiteBox => self.policy()?.action_repr_vjp_batch(&sbar.view(), &grad.view()),
        }
    }
}

/// Adversary objective for the actor: mean critic value of its perturbation,
/// negated for white-box critics (which estimate the agent's value).
pub(crate) fn actor_objective(
    actor: &Mlp,
    critic: &Mlp,
    ball: Ball,
    input: CriticInput<'_>,
    states: &Array2<f64>,
) -> Result<f64> {
    let raw = actor.predict(&states.view())?;
    let (sbar, _) = ball.apply_batch(states, &raw);
    let block = input.action_block(states, &sbar)?;
    let q = critic.predict(&input.input(states, &block).view())?;
    Ok(sign(input.kind) * q.mean().unwrap_or(0.0))
}

fn sign(kind: AttackKind) -> f64 {
    match kind {
        AttackKind::BlackBox => 1.0,
        AttackKind::WhiteBox => -1.0,
    }
}

/// Gradient of [`actor_objective`] with respect to the actor parameters.
pub(crate) fn actor_objective_gradient(
    actor: &Mlp,
    critic: &Mlp,
    ball: Ball,
    input: CriticInput<'_>,
    states: &Array2<f64>,
) -> Result<ParamGrads> {
    let n = states.nrows();
    let d = states.ncols();
    let (raw, a_cache) = actor.forward(&states.view())?;
    let (sbar, mask) = ball.apply_batch(states, &raw);
    let block = input.action_block(states, &sbar)?;
    let (_, q_cache) = critic.forward(&input.input(states, &block).view())?;
    let dq = Array2::from_elem((n, 1), sign(input.kind) / n as f64);
    let din = critic.input_gradient(&q_cache, &dq.view())?;
    let dblock = din.slice(s![.., d..]).to_owned();
    let dsbar = input.block_backward(&sbar, &dblock)?;
    let draw = ball.backward(&raw, &mask, &dsbar);
    Ok(actor.backward(&a_cache, &draw.view())?.0)
}

/// A trained observation adversary: actor `χ_φ` with its projection layer
/// and the critic it was trained with.
#[derive(Debug, Clone)]
pub struct NeuralAttack {
    pub kind: AttackKind,
    pub env: String,
    pub config: AttackConfig,
    pub actor: Mlp,
    pub critic: Mlp,
    /// Radius of the projection layer; equals `config.epsilon` unless swept.
    pub epsilon: f64,
    pub log: TrainingLog,
}

impl NeuralAttack {
    pub(crate) fn ball(&self) -> Ball {
        Ball {
            epsilon: self.epsilon,
            lambda: self.config.lambda,
            norm: self.config.norm,
        }
    }

    pub(crate) fn critic_scale(&self) -> f64 {
        critic_scale(self.config.epsilon)
    }

    /// Deterministic perturbed observation `χ_φ(s)`.
    pub fn perturb_one(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let raw = self.actor.predict_one(obs)?;
        Ok(self.ball().apply(obs, &raw))
    }

    pub fn perturb_batch(&self, obs: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let raw = self.actor.predict(obs)?;
        Ok(self.ball().apply_batch(&obs.to_owned(), &raw).0)
    }

    fn critic_input<'a>(&self, policy: Option<&'a dyn DifferentiablePolicy>) -> CriticInput<'a> {
        CriticInput {
            kind: self.kind,
            scale: self.critic_scale(),
            policy,
        }
    }

    /// Mean adversary value of `χ_φ` over `states` as judged by the critic
    /// (the quantity the actor ascends). White-box attacks need `policy`.
    pub fn actor_objective(
        &self,
        states: &ArrayView2<f64>,
        policy: Option<&dyn DifferentiablePolicy>,
    ) -> Result<f64> {
        actor_objective(&self.actor, &self.critic, self.ball(), self.critic_input(policy), &states.to_owned())
    }

    /// Gradient of [`NeuralAttack::actor_objective`] in the actor parameters.
    pub fn actor_gradient(
        &self,
        states: &ArrayView2<f64>,
        policy: Option<&dyn DifferentiablePolicy>,
    ) -> Result<ParamGrads> {
        actor_objective_gradient(&self.actor, &self.critic, self.ball(), self.critic_input(policy), &states.to_owned())
    }

    /// The same actor behind a projection layer of radius `epsilon`.
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    /// One view per radius, without retraining.
    pub fn sweep_epsilon(&self, epsilons: &[f64]) -> Vec<(f64, NeuralAttack)> {
        epsilons.iter().map(|&e| (e, self.with_epsilon(e))).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut kv = self.config.to_kv();
        kv.set("kind", self.kind)
            .set("env", &self.env)
            .set("projection_epsilon", self.epsilon);
        fs::write(dir.join("attack.txt"), kv.to_text())?;
        fs::write(dir.join("actor.net"), self.actor.to_text())?;
        fs::write(dir.join("critic.net"), self.critic.to_text())?;
        self.log.write_csv(fs::File::create(dir.join("log.csv"))?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path)
                .map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))
        };
        let kv = KeyValues::parse(&read("attack.txt")?)?;
        let missing = |k: &str| Error::InvalidConfig(format!("attack.txt lacks `{k}`"));
        let kind: AttackKind = kv.get("kind")?.ok_or_else(|| missing("kind"))?;
        let env: String = kv.get("env")?.ok_or_else(|| missing("env"))?;
        let mut config = AttackConfig::preset("mountaincar")?;
        config.apply(&kv, &["kind", "env", "projection_epsilon"])?;
        let epsilon = kv.get("projection_epsilon")?.unwrap_or(config.epsilon);
        let actor = Mlp::from_text(&read("actor.net")?)?;
        let critic = Mlp::from_text(&read("critic.net")?)?;
        if actor.input_dim() != actor.output_dim() {
            return Err(Error::DimensionMismatch {
                what: "attack actor output",
                expected: actor.input_dim(),
                found: actor.output_dim(),
            });
        }
        let log = match fs::File::open(dir.join("log.csv")) {
            Ok(f) => TrainingLog::read_csv(f)?,
            Err(_) => TrainingLog::default(),
        };
        Ok(Self {
            kind,
            env,
            config,
            actor,
            critic,
            epsilon,
            log,
        })
    }
}

pub(crate) fn critic_scale(epsilon: f64) -> f64 {
    if epsilon > 0.0 {
        epsilon
    } else {
        1.0
    }
}

impl ObservationAttack for NeuralAttack {
    fn perturb(&mut self, obs: &[f64], _agent: &dyn Agent, _rng: &mut Rng) -> Result<Vec<f64>> {
        self.perturb_one(obs)
    }
}
