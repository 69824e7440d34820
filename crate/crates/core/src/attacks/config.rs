use crate::agents::Schedule;
use crate::config::{format_list, KeyValues};
use crate::envs::Norm;
use crate::neural::PROJECTION_LAMBDA;
use crate::{Error, Result};
use std::fmt;
use std::str::FromStr;

/// How the adversary explores during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExplorationMode {
    /// Per-dimension uniform noise on the annealed range.
    Uniform,
    /// Uniform noise mixed, with probability `p`, with the normalised
    /// direction that makes the agent's least likely action more likely.
    GradientBased { p: f64 },
}

impl fmt::Display for ExplorationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExplorationMode::Uniform => f.write_str("uniform"),
            ExplorationMode::GradientBased { p } => write!(f, "gradient:{p}"),
        }
    }
}

impl FromStr for ExplorationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "uniform" => Ok(ExplorationMode::Uniform),
            None if s == "gradient" => Ok(ExplorationMode::GradientBased { p: 0.35 }),
            Some(("gradient", p)) => {
                let p: f64 = p
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad probability in `{s}`")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidConfig(format!("probability {p} outside [0, 1]")));
                }
                Ok(ExplorationMode::GradientBased { p })
            }
            _ => Err(Error::UnknownName {
                kind: "exploration mode",
                name: s.to_string(),
            }),
        }
    }
}

/// Hyperparameters of one attack-training run.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub norm: Norm,
    pub steps: usize,
    pub warmup: usize,
    pub memory: usize,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub grad_clip: Option<f64>,
    /// Half-width of the uniform exploration noise.
    pub noise: Schedule,
    pub batch: usize,
    pub tau: f64,
    pub lambda: f64,
    pub hidden: Vec<usize>,
    pub exploration: ExplorationMode,
    pub test_random_steps: usize,
}

const KEYS: [&str; 18] = [
    "epsilon",
    "norm",
    "steps",
    "warmup",
    "memory",
    "gamma",
    "actor_lr",
    "critic_lr",
    "grad_clip",
    "noise_start",
    "noise_end",
    "noise_steps",
    "batch",
    "tau",
    "lambda",
    "hidden",
    "exploration",
    "test_random_steps",
];

impl AttackConfig {
    /// Published adversary settings for `env`; the gridworld entry is a small
    /// test configuration.
    pub fn preset(env: &str) -> Result<Self> {
        let base = Self {
            epsilon: 0.05,
            norm: Norm::L2,
            steps: 40_000,
            warmup: 4_000,
            memory: 15_000,
            gamma: 0.99,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            grad_clip: Some(1.0),
            noise: Schedule {
                start: 0.5,
                end: 1e-3,
                steps: 28_000,
            },
            batch: 164,
            tau: 1e-3,
            lambda: PROJECTION_LAMBDA,
            hidden: vec![400, 300],
            exploration: ExplorationMode::Uniform,
            test_random_steps: 10,
        };
        Ok(match env {
            "mountaincar" => base,
            "mountaincar-continuous" => Self {
                steps: 60_000,
                warmup: 3_000,
                memory: 30_000,
                noise: Schedule {
                    start: 2.0,
                    end: 1e-3,
                    steps: 48_000,
                },
                batch: 32,
                ..base
            },
            "cartpole" => Self {
                actor_lr: 1e-3,
                critic_lr: 1e-2,
                noise: Schedule {
                    start: 0.3,
                    end: 1e-3,
                    steps: 28_000,
                },
                batch: 92,
                tau: 1e-2,
                ..base
            },
            "gridworld" => Self {
                epsilon: 0.2,
                steps: 3_000,
                warmup: 300,
                memory: 3_000,
                batch: 32,
                noise: Schedule {
                    start: 0.5,
                    end: 1e-3,
                    steps: 2_000,
                },
                tau: 1e-2,
                hidden: vec![64, 64],
                test_random_steps: 0,
                ..base
            },
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "no attack preset for `{env}`"
                )))
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be non-negative");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.memory == 0 || self.batch == 0 {
            return bad("memory and batch must be positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.noise.start < self.noise.end || self.noise.end < 0.0 {
            return bad("noise schedule must be non-increasing and non-negative");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("epsilon", self.epsilon)
            .set("norm", self.norm)
            .set("steps", self.steps)
            .set("warmup", self.warmup)
            .set("memory", self.memory)
            .set("gamma", self.gamma)
            .set("actor_lr", self.actor_lr)
            .set("critic_lr", self.critic_lr)
            .set(
                "grad_clip",
                self.grad_clip.map_or("none".to_string(), |c| c.to_string()),
            )
            .set("noise_start", self.noise.start)
            .set("noise_end", self.noise.end)
            .set("noise_steps", self.noise.steps)
            .set("batch", self.batch)
            .set("tau", self.tau)
            .set("lambda", self.lambda)
            .set("hidden", format_list(&self.hidden))
            .set("exploration", self.exploration)
            .set("test_random_steps", self.test_random_steps);
        kv
    }

    /// Overrides fields present in `kv`; `self` is unchanged on error.
    pub fn apply(&mut self, kv: &KeyValues, extra: &[&str]) -> Result<()> {
        let known: Vec<&str> = KEYS.iter().chain(extra).copied().collect();
        kv.reject_unknown(&known)?;
        let mut c = self.clone();
        kv.update("epsilon", &mut c.epsilon)?;
        kv.update("norm", &mut c.norm)?;
        kv.update("steps", &mut c.steps)?;
        kv.update("warmup", &mut c.warmup)?;
        kv.update("memory", &mut c.memory)?;
        kv.update("gamma", &mut c.gamma)?;
        kv.update("actor_lr", &mut c.actor_lr)?;
        kv.update("critic_lr", &mut c.critic_lr)?;
        if let Some(v) = kv.raw("grad_clip") {
            c.grad_clip = match v {
                "none" | "" => None,
                v => Some(v.parse().map_err(|_| {
                    Error::InvalidConfig(format!("cannot parse `grad_clip = {v}`"))
                })?),
            };
        }
        kv.update("noise_start", &mut c.noise.start)?;
        kv.update("noise_end", &mut c.noise.end)?;
        kv.update("noise_steps", &mut c.noise.steps)?;
        kv.update("batch", &mut c.batch)?;
        kv.update("tau", &mut c.tau)?;
        kv.update("lambda", &mut c.lambda)?;
        if let Some(h) = kv.get_list("hidden")? {
            c.hidden = h;
        }
        kv.update("exploration", &mut c.exploration)?;
        kv.update("test_random_steps", &mut c.test_random_steps)?;
        c.validate()?;
        *self = c;
        Ok(())
    }
}
