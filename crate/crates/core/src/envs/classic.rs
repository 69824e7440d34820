//! MountainCar (discrete and continuous) and CartPole, following the widely
//! published classic-control equations.
//!
//! Episode caps count simulator frames, so with frame skip `k` a 200-frame
//! MountainCar episode lasts at most `200/k` decisions and its return stays in
//! `[-200, 0]`.

use super::{Action, ActionSpace, EnvStep, Environment, ObsBounds};
use crate::rng::{seeded, Rng};
use crate::{Error, Result};
use rand::Rng as _;

pub const DEFAULT_FRAME_SKIP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassicKind {
    MountainCar,
    MountainCarContinuous,
    CartPole,
}

impl ClassicKind {
    fn max_frames(self) -> usize {
        match self {
            ClassicKind::MountainCar | ClassicKind::CartPole => 200,
            ClassicKind::MountainCarContinuous => 999,
        }
    }
}

// MountainCar
const MC_MIN_POS: f64 = -1.2;
const MC_MAX_POS: f64 = 0.6;
const MC_MAX_SPEED: f64 = 0.07;
const MC_GOAL: f64 = 0.5;
const MC_GOAL_CONTINUOUS: f64 = 0.45;
const MC_FORCE: f64 = 0.001;
const MC_POWER: f64 = 0.0015;
const MC_GRAVITY: f64 = 0.0025;

// CartPole
const CP_GRAVITY: f64 = 9.8;
const CP_MASS_CART: f64 = 1.0;
const CP_MASS_POLE: f64 = 0.1;
const CP_HALF_LENGTH: f64 = 0.5;
const CP_FORCE: f64 = 10.0;
const CP_TAU: f64 = 0.02;
const CP_X_LIMIT: f64 = 2.4;
const CP_THETA_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;

/// Continuous-state simulator with frame skip and a frame cap.
#[derive(Debug, Clone)]
pub struct ClassicEnv {
    kind: ClassicKind,
    state: Vec<f64>,
    bounds: ObsBounds,
    rng: Rng,
    frame_skip: usize,
    max_frames: usize,
    frames: usize,
    done: bool,
}

pub fn make_mountaincar(continuous: bool) -> ClassicEnv {
    let kind = if continuous {
        ClassicKind::MountainCarContinuous
    } else {
        ClassicKind::MountainCar
    };
    let bounds = ObsBounds::new(
        vec![MC_MIN_POS, -MC_MAX_SPEED],
        vec![MC_MAX_POS, MC_MAX_SPEED],
    )
    .expect("static bounds");
    ClassicEnv::new(kind, bounds)
}

pub fn make_cartpole() -> ClassicEnv {
    let bounds = ObsBounds::new(
        vec![-CP_X_LIMIT, -3.0, -CP_THETA_LIMIT, -3.5],
        vec![CP_X_LIMIT, 3.0, CP_THETA_LIMIT, 3.5],
    )
    .expect("static bounds");
    ClassicEnv::new(ClassicKind::CartPole, bounds)
}

impl ClassicEnv {
    fn new(kind: ClassicKind, bounds: ObsBounds) -> Self {
        let dim = bounds.dim();
        Self {
            kind,
            state: vec![0.0; dim],
            bounds,
            rng: seeded(0),
            frame_skip: DEFAULT_FRAME_SKIP,
            max_frames: kind.max_frames(),
            frames: 0,
            done: true,
        }
    }

    pub fn with_frame_skip(mut self, frame_skip: usize) -> Self {
        self.frame_skip = frame_skip.max(1);
        self
    }

    pub fn with_max_frames(mut self, max_frames: usize) -> Self {
        self.max_frames = max_frames;
        self
    }

    pub fn kind(&self) -> ClassicKind {
        self.kind
    }

    /// Raw physical state.
    pub fn state(&self) -> &[f64] {
        &self.state
    }

    /// Overrides the physical state and starts a fresh episode from it.
    pub fn set_state(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.state.len() {
            return Err(Error::DimensionMismatch {
                what: "physical state",
                expected: self.state.len(),
                found: state.len(),
            });
        }
        self.state = state.to_vec();
        self.frames = 0;
        self.done = false;
        Ok(self.observe())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    fn observe(&self) -> Vec<f64> {
        self.bounds.normalize_clamped(&self.state)
    }

    /// One simulator frame. Returns `(reward, terminal)`.
    fn frame(&mut self, action: &Action) -> Result<(f64, bool)> {
        match self.kind {
            ClassicKind::MountainCar => {
                let a = match action {
                    Action::Discrete(a) if *a < 3 => *a,
                    _ => {
                        return Err(Error::Mismatch(
                            "MountainCar expects a discrete action in 0..3".into(),
                        ))
                    }
                };
                let (mut pos, mut vel) = (self.state[0], self.state[1]);
                vel += (a as f64 - 1.0) * MC_FORCE - (3.0 * pos).cos() * MC_GRAVITY;
                vel = vel.clamp(-MC_MAX_SPEED, MC_MAX_SPEED);
                pos = (pos + vel).clamp(MC_MIN_POS, MC_MAX_POS);
                if pos == MC_MIN_POS && vel < 0.0 {
                    vel = 0.0;
                }
                self.state = vec![pos, vel];
                Ok((-1.0, pos >= MC_GOAL && vel >= 0.0))
            }
            ClassicKind::MountainCarContinuous => {
                let force = match action {
                    Action::Continuous(v) if v.len() == 1 => v[0].clamp(-1.0, 1.0),
                    _ => {
                        return Err(Error::Mismatch(
                            "continuous MountainCar expects a 1-dim action".into(),
                        ))
                    }
                };
                let (mut pos, mut vel) = (self.state[0], self.state[1]);
                vel += force * MC_POWER - MC_GRAVITY * (3.0 * pos).cos();
                vel = vel.clamp(-MC_MAX_SPEED, MC_MAX_SPEED);
                pos = (pos + vel).clamp(MC_MIN_POS, MC_MAX_POS);
                if pos == MC_MIN_POS && vel < 0.0 {
                    vel = 0.0;
                }
                self.state = vec![pos, vel];
                let terminal = pos >= MC_GOAL_CONTINUOUS && vel >= 0.0;
                let reward = if terminal { 100.0 } else { 0.0 } - 0.1 * force * force;
                Ok((reward, terminal))
            }
            ClassicKind::CartPole => {
                let a = match action {
                    Action::Discrete(a) if *a < 2 => *a,
                    _ => {
                        return Err(Error::Mismatch(
                            "CartPole expects a discrete action in 0..2".into(),
                        ))
                    }
                };
                let (x, x_dot, theta, theta_dot) =
                    (self.state[0], self.state[1], self.state[2], self.state[3]);
                let force = if a == 1 { CP_FORCE } else { -CP_FORCE };
                let total_mass = CP_MASS_CART + CP_MASS_POLE;
                let polemass_length = CP_MASS_POLE * CP_HALF_LENGTH;
                let (sin, cos) = theta.sin_cos();
                let temp = (force + polemass_length * theta_dot * theta_dot * sin) / total_mass;
                let theta_acc = (CP_GRAVITY * sin - cos * temp)
                    / (CP_HALF_LENGTH * (4.0 / 3.0 - CP_MASS_POLE * cos * cos / total_mass));
                let x_acc = temp - polemass_length * theta_acc * cos / total_mass;
                let state = vec![
                    x + CP_TAU * x_dot,
                    x_dot + CP_TAU * x_acc,
                    theta + CP_TAU * theta_dot,
                    theta_dot + CP_TAU * theta_acc,
                ];
                let failed = state[0].abs() > CP_X_LIMIT || state[2].abs() > CP_THETA_LIMIT;
                self.state = state;
                Ok((1.0, failed))
            }
        }
    }
}

impl Environment for ClassicEnv {
    fn name(&self) -> &str {
        match self.kind {
            ClassicKind::MountainCar => "mountaincar",
            ClassicKind::MountainCarContinuous => "mountaincar-continuous",
            ClassicKind::CartPole => "cartpole",
        }
    }

    fn obs_dim(&self) -> usize {
        self.bounds.dim()
    }

    fn action_space(&self) -> ActionSpace {
        match self.kind {
            ClassicKind::MountainCar => ActionSpace::Discrete(3),
            ClassicKind::CartPole => ActionSpace::Discrete(2),
            ClassicKind::MountainCarContinuous => ActionSpace::Continuous {
                dim: 1,
                low: -1.0,
                high: 1.0,
            },
        }
    }

    fn bounds(&self) -> &ObsBounds {
        &self.bounds
    }

    fn seed(&mut self, seed: u64) {
        self.rng = seeded(seed);
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = match self.kind {
            ClassicKind::MountainCar | ClassicKind::MountainCarContinuous => {
                vec![self.rng.random_range(-0.6..-0.4), 0.0]
            }
            ClassicKind::CartPole => (0..4).map(|_| self.rng.random_range(-0.05..0.05)).collect(),
        };
        self.frames = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep> {
        if self.done {
            return Err(Error::StepAfterDone);
        }
        let mut reward = 0.0;
        let mut terminal = false;
        for _ in 0..self.frame_skip {
            let (r, t) = self.frame(action)?;
            reward += r;
            self.frames += 1;
            if t {
                terminal = true;
                break;
            }
            if self.frames >= self.max_frames {
                break;
            }
        }
        let truncated = !terminal && self.frames >= self.max_frames;
        self.done = terminal || truncated;
        Ok(EnvStep {
            observation: self.observe(),
            reward,
            done: self.done,
            truncated,
        })
    }

    fn reward_bound(&self) -> f64 {
        let k = self.frame_skip as f64;
        match self.kind {
            ClassicKind::MountainCar | ClassicKind::CartPole => k,
            // the goal frame ends the decision early
            ClassicKind::MountainCarContinuous => 100.0 + 0.1 * k,
        }
    }

    fn reward_floor(&self) -> f64 {
        match self.kind {
            ClassicKind::MountainCar => -(self.max_frames as f64),
            ClassicKind::MountainCarContinuous => -0.1 * self.max_frames as f64,
            ClassicKind::CartPole => 0.0,
        }
    }

    fn frame_skip(&self) -> usize {
        self.frame_skip
    }
}
