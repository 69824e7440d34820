use crate::config::{format_list, KeyValues};
use crate::{Error, Result};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Dqn,
    Ddpg,
    Drqn,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Dqn => "dqn",
            Algo::Ddpg => "ddpg",
            Algo::Drqn => "drqn",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dqn" => Ok(Algo::Dqn),
            "ddpg" => Ok(Algo::Ddpg),
            "drqn" | "drqn-lite" => Ok(Algo::Drqn),
            _ => Err(Error::UnknownName {
                kind: "algorithm",
                name: s.to_string(),
            }),
        }
    }
}

/// Linear annealing from `start` to `end` over `steps`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

impl Schedule {
    pub fn value(&self, t: usize) -> f64 {
        if self.steps == 0 || t >= self.steps {
            return self.end;
        }
        self.start + (self.end - self.start) * t as f64 / self.steps as f64
    }
}

/// Hyperparameters of one main-agent training run.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub algo: Algo,
    pub steps: usize,
    pub warmup: usize,
    pub memory: usize,
    pub gamma: f64,
    /// Q-network or critic learning rate.
    pub lr: f64,
    /// DDPG actor learning rate.
    pub actor_lr: f64,
    pub grad_clip: Option<f64>,
    pub batch: usize,
    /// ε-greedy rate (DQN, DRQN) or Gaussian noise std (DDPG).
    pub exploration: Schedule,
    /// Hard target refresh period in steps (DQN, DRQN).
    pub target_period: usize,
    /// Soft target rate (DDPG).
    pub tau: f64,
    pub frame_skip: usize,
    /// Hidden widths of the Q-network, the DDPG critic, or the DRQN head.
    pub hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
    pub recurrent_hidden: usize,
    /// Training subsequence length for DRQN.
    pub window: usize,
    pub train_random_steps: usize,
    pub test_random_steps: usize,
    /// Treat episodes cut at the step cap as terminal (no bootstrap).
    pub time_limit_terminal: bool,
}

const KEYS: [&str; 22] = [
    "algo",
    "steps",
    "warmup",
    "memory",
    "gamma",
    "lr",
    "actor_lr",
    "grad_clip",
    "batch",
    "explore_start",
    "explore_end",
    "explore_steps",
    "target_period",
    "tau",
    "frame_skip",
    "hidden",
    "actor_hidden",
    "recurrent_hidden",
    "window",
    "train_random_steps",
    "test_random_steps",
    "time_limit_terminal",
];

impl AgentConfig {
    /// Published settings for `env` trained with `algo`. The gridworld preset
    /// is a small configuration for tests.
    pub fn preset(env: &str, algo: Algo) -> Result<Self> {
        let mut c = match (env, algo) {
            ("mountaincar", Algo::Dqn | Algo::Drqn) => Self {
                algo,
                steps: 40_000,
                warmup: 100,
                memory: 40_000,
                gamma: 0.99,
                lr: 1e-3,
                actor_lr: 1e-3,
                grad_clip: None,
                batch: 32,
                exploration: Schedule {
                    start: 0.95,
                    end: 0.1,
                    steps: 28_000,
                },
                target_period: 100,
                tau: 1.0,
                frame_skip: 4,
                hidden: vec![512, 256, 64],
                actor_hidden: vec![],
                recurrent_hidden: 64,
                window: 8,
                train_random_steps: 0,
                test_random_steps: 10,
                time_limit_terminal: true,
            },
            ("cartpole", Algo::Dqn | Algo::Drqn) => Self {
                algo,
                steps: 22_000,
                warmup: 1_000,
                memory: 22_000,
                gamma: 0.99,
                lr: 1e-4,
                actor_lr: 1e-4,
                grad_clip: Some(1.0),
                batch: 256,
                exploration: Schedule {
                    start: 0.95,
                    end: 0.1,
                    steps: 11_000,
                },
                target_period: 200,
                tau: 1.0,
                frame_skip: 4,
                hidden: vec![256, 256],
                actor_hidden: vec![],
                recurrent_hidden: 64,
                window: 8,
                train_random_steps: 0,
                test_random_steps: 10,
                time_limit_terminal: true,
            },
            ("mountaincar-continuous", Algo::Ddpg) => Self {
                algo,
                steps: 20_000,
                warmup: 1_000,
                memory: 20_000,
                gamma: 0.99,
                lr: 1e-3,
                actor_lr: 1e-4,
                grad_clip: Some(1.0),
                batch: 64,
                exploration: Schedule {
                    start: 2.0,
                    end: 1e-3,
                    steps: 14_000,
                },
                target_period: 1,
                tau: 1e-3,
                frame_skip: 4,
                hidden: vec![400, 300],
                actor_hidden: vec![400, 300],
                recurrent_hidden: 0,
                window: 1,
                train_random_steps: 0,
                test_random_steps: 10,
                time_limit_terminal: true,
            },
            ("gridworld", Algo::Dqn | Algo::Drqn) => Self {
                algo,
                steps: 6_000,
                warmup: 200,
                memory: 6_000,
                gamma: 0.9,
                lr: 1e-3,
                actor_lr: 1e-3,
                grad_clip: Some(10.0),
                batch: 32,
                exploration: Schedule {
                    start: 1.0,
                    end: 0.1,
                    steps: 3_000,
                },
                target_period: 100,
                tau: 1.0,
                frame_skip: 1,
                hidden: vec![64, 64],
                actor_hidden: vec![],
                recurrent_hidden: 32,
                window: 4,
                train_random_steps: 0,
                test_random_steps: 0,
                time_limit_terminal: true,
            },
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "no preset for {algo} on `{env}`"
                )))
            }
        };
        if algo == Algo::Drqn {
            // a 64-unit cell followed by one 64-unit head layer
            c.hidden = vec![64];
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.memory == 0 || self.batch == 0 {
            return bad("memory and batch must be positive");
        }
        if !(self.lr > 0.0 && self.actor_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.exploration.start < self.exploration.end || self.exploration.end < 0.0 {
            return bad("exploration schedule must be non-increasing and non-negative");
        }
        if self.algo == Algo::Ddpg && !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.algo != Algo::Ddpg && self.target_period == 0 {
            return bad("target period must be positive");
        }
        if self.algo == Algo::Drqn && (self.window == 0 || self.recurrent_hidden == 0) {
            return bad("recurrent agents need a positive window and hidden size");
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return bad("gradient clip must be positive");
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("algo", self.algo)
            .set("steps", self.steps)
            .set("warmup", self.warmup)
            .set("memory", self.memory)
            .set("gamma", self.gamma)
            .set("lr", self.lr)
            .set("actor_lr", self.actor_lr)
            .set(
                "grad_clip",
                self.grad_clip.map_or("none".to_string(), |c| c.to_string()),
            )
            .set("batch", self.batch)
            .set("explore_start", self.exploration.start)
            .set("explore_end", self.exploration.end)
            .set("explore_steps", self.exploration.steps)
            .set("target_period", self.target_period)
            .set("tau", self.tau)
            .set("frame_skip", self.frame_skip)
            .set("hidden", format_list(&self.hidden))
            .set("actor_hidden", format_list(&self.actor_hidden))
            .set("recurrent_hidden", self.recurrent_hidden)
            .set("window", self.window)
            .set("train_random_steps", self.train_random_steps)
            .set("test_random_steps", self.test_random_steps)
            .set("time_limit_terminal", self.time_limit_terminal);
        kv
    }

    /// Overrides fields present in `kv`. Unknown keys other than those listed
    /// in `extra` are rejected; on error `self` is left unchanged.
    pub fn apply(&mut self, kv: &KeyValues, extra: &[&str]) -> Result<()> {
        let mut next = self.clone();
        next.apply_inner(kv, extra)?;
        *self = next;
        Ok(())
    }

    fn apply_inner(&mut self, kv: &KeyValues, extra: &[&str]) -> Result<()> {
        let known: Vec<&str> = KEYS.iter().chain(extra).copied().collect();
        kv.reject_unknown(&known)?;
        kv.update("algo", &mut self.algo)?;
        kv.update("steps", &mut self.steps)?;
        kv.update("warmup", &mut self.warmup)?;
        kv.update("memory", &mut self.memory)?;
        kv.update("gamma", &mut self.gamma)?;
        kv.update("lr", &mut self.lr)?;
        kv.update("actor_lr", &mut self.actor_lr)?;
        if let Some(v) = kv.raw("grad_clip") {
            self.grad_clip = match v {
                "none" | "" => None,
                v => Some(v.parse().map_err(|_| {
                    Error::InvalidConfig(format!("cannot parse `grad_clip = {v}`"))
                })?),
            };
        }
        kv.update("batch", &mut self.batch)?;
        kv.update("explore_start", &mut self.exploration.start)?;
        kv.update("explore_end", &mut self.exploration.end)?;
        kv.update("explore_steps", &mut self.exploration.steps)?;
        kv.update("target_period", &mut self.target_period)?;
        kv.update("tau", &mut self.tau)?;
        kv.update("frame_skip", &mut self.frame_skip)?;
        if let Some(h) = kv.get_list("hidden")? {
            self.hidden = h;
        }
        if let Some(h) = kv.get_list("actor_hidden")? {
            self.actor_hidden = h;
        }
        kv.update("recurrent_hidden", &mut self.recurrent_hidden)?;
        kv.update("window", &mut self.window)?;
        kv.update("train_random_steps", &mut self.train_random_steps)?;
        kv.update("test_random_steps", &mut self.test_random_steps)?;
        kv.update("time_limit_terminal", &mut self.time_limit_terminal)?;
        self.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_is_linear_then_flat() {
        let s = Schedule {
            start: 0.95,
            end: 0.1,
            steps: 100,
        };
        assert_eq!(s.value(0), 0.95);
        assert!((s.value(50) - 0.525).abs() < 1e-15);
        assert_eq!(s.value(100), 0.1);
        assert_eq!(s.value(10_000), 0.1);
    }

    #[test]
    fn presets_validate_and_round_trip() {
        for (env, algo) in [
            ("mountaincar", Algo::Dqn),
            ("mountaincar", Algo::Drqn),
            ("cartpole", Algo::Dqn),
            ("mountaincar-continuous", Algo::Ddpg),
            ("gridworld", Algo::Dqn),
        ] {
            let c = AgentConfig::preset(env, algo).unwrap();
            c.validate().unwrap();
            let mut back = AgentConfig::preset(env, algo).unwrap();
            back.steps = 1;
            back.grad_clip = Some(3.0);
            back.apply(&c.to_kv(), &[]).unwrap();
            assert_eq!(back, c);
        }
        assert!(AgentConfig::preset("cartpole", Algo::Ddpg).is_err());
    }

    #[test]
    fn mountaincar_dqn_matches_published_settings() {
        let c = AgentConfig::preset("mountaincar", Algo::Dqn).unwrap();
        assert_eq!((c.steps, c.warmup, c.memory, c.batch), (40_000, 100, 40_000, 32));
        assert_eq!((c.gamma, c.lr, c.target_period), (0.99, 1e-3, 100));
        assert_eq!(c.hidden, vec![512, 256, 64]);
        assert_eq!(c.grad_clip, None);
    }

    #[test]
    fn bad_values_rejected() {
        let mut c = AgentConfig::preset("mountaincar", Algo::Dqn).unwrap();
        let kv = KeyValues::parse("gamma = 1.0\n").unwrap();
        assert!(c.apply(&kv, &[]).is_err());
        let kv = KeyValues::parse("colour = red\n").unwrap();
        assert!(c.apply(&kv, &[]).is_err());
        assert!(c.apply(&kv, &["colour"]).is_ok());
    }
}
