//! Environment simulators.
//!
//! All environments emit observations normalized to `[0,1]^d` by a per-dimension
//! affine map; perturbation budgets are measured in that space.

mod classic;
mod gridworld;
mod norm;

pub use classic::{make_cartpole, make_mountaincar, ClassicEnv, ClassicKind};
pub use gridworld::{make_gridworld, GridPos, Gridworld, GridworldEnv};
pub use norm::Norm;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    /// Box `[low, high]^dim`.
    Continuous {
        dim: usize,
        low: f64,
        high: f64,
    },
}

impl ActionSpace {
    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete(_))
    }

    /// Width of the vector an agent emits: action count or box dimension.
    pub fn width(&self) -> usize {
        match self {
            ActionSpace::Discrete(n) => *n,
            ActionSpace::Continuous { dim, .. } => *dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

/// Outcome of one agent decision (possibly several simulator frames).
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// Episode over, either terminal or truncated.
    pub done: bool,
    /// Ended by the frame cap rather than a terminal state.
    pub truncated: bool,
}

/// Per-dimension bounds of the raw observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsBounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ObsBounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() {
            return Err(Error::DimensionMismatch {
                what: "observation bounds",
                expected: low.len(),
                found: high.len(),
            });
        }
        if low.iter().zip(&high).any(|(l, h)| !(h > l)) {
            return Err(Error::InvalidConfig(
                "each upper bound must exceed its lower bound".into(),
            ));
        }
        Ok(Self { low, high })
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(x, (l, h))| (x - l) / (h - l))
            .collect()
    }

    pub fn denormalize(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(u, (l, h))| l + u * (h - l))
            .collect()
    }

    /// Clamp into the bounds, then normalize.
    pub fn normalize_clamped(&self, raw: &[f64]) -> Vec<f64> {
        clamp_unit(&self.normalize(raw))
    }
}

/// Componentwise clamp into `[0, 1]`.
pub fn clamp_unit(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

/// A seeded episodic environment with normalized observations.
pub trait Environment: Send {
    fn name(&self) -> &str;
    fn obs_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    fn bounds(&self) -> &ObsBounds;
    /// Reseeds the internal random stream used by resets.
    fn seed(&mut self, seed: u64);
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &Action) -> Result<EnvStep>;
    /// Worst achievable episode return, used to normalize performance loss.
    fn reward_floor(&self) -> f64;
    /// Bound on `|r|` for one agent decision (frame skip included); infinite
    /// when unknown.
    fn reward_bound(&self) -> f64 {
        f64::INFINITY
    }
    fn frame_skip(&self) -> usize {
        1
    }
}

pub const ENV_NAMES: [&str; 4] = [
    "gridworld",
    "mountaincar",
    "mountaincar-continuous",
    "cartpole",
];

/// Builds an environment by name with the given frame skip (ignored by the gridworld).
pub fn make_env(name: &str, frame_skip: usize) -> Result<Box<dyn Environment>> {
    Ok(match name {
        "gridworld" => Box::new(GridworldEnv::new(Gridworld::new(6, 6)?)),
        "mountaincar" => Box::new(make_mountaincar(false).with_frame_skip(frame_skip)),
        "mountaincar-continuous" => Box::new(make_mountaincar(true).with_frame_skip(frame_skip)),
        "cartpole" => Box::new(make_cartpole().with_frame_skip(frame_skip)),
        _ => {
            return Err(Error::UnknownName {
                kind: "environment",
                name: name.to_string(),
            })
        }
    })
}
