use super::{Action, ActionSpace, EnvStep, Environment, ObsBounds};
use crate::mdp::{MdpBuilder, StateId, TabularMdp};
use crate::rng::{seeded, Rng};
use crate::{Error, Result};
use rand::Rng as _;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridPos {
    pub row: usize,
    pub col: usize,
}

/// Rectangular grid whose goals are the top-left and bottom-right corners.
/// State ids are row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gridworld {
    pub width: usize,
    pub height: usize,
}

impl Gridworld {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidConfig(format!(
                "gridworld needs width, height >= 2 (got {width}x{height})"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    pub fn state(&self, pos: GridPos) -> StateId {
        pos.row * self.width + pos.col
    }

    pub fn pos(&self, s: StateId) -> GridPos {
        GridPos {
            row: s / self.width,
            col: s % self.width,
        }
    }

    pub fn is_goal(&self, s: StateId) -> bool {
        s == 0 || s == self.n_states() - 1
    }

    /// ℓ1 distance between two cells.
    pub fn distance(&self, a: StateId, b: StateId) -> usize {
        let (pa, pb) = (self.pos(a), self.pos(b));
        pa.row.abs_diff(pb.row) + pa.col.abs_diff(pb.col)
    }

    /// Cell reached by `action`; moves off the grid leave the agent in place.
    pub fn move_from(&self, s: StateId, action: usize) -> StateId {
        let p = self.pos(s);
        let q = match action {
            UP if p.row > 0 => GridPos {
                row: p.row - 1,
                ..p
            },
            DOWN if p.row + 1 < self.height => GridPos {
                row: p.row + 1,
                ..p
            },
            LEFT if p.col > 0 => GridPos {
                col: p.col - 1,
                ..p
            },
            RIGHT if p.col + 1 < self.width => GridPos {
                col: p.col + 1,
                ..p
            },
            _ => p,
        };
        self.state(q)
    }

    /// Cell coordinates scaled to `[0,1]²`.
    pub fn observation(&self, s: StateId) -> Vec<f64> {
        let p = self.pos(s);
        vec![
            p.row as f64 / (self.height - 1) as f64,
            p.col as f64 / (self.width - 1) as f64,
        ]
    }

    /// Nearest cell to a (possibly perturbed) observation.
    pub fn state_from_observation(&self, obs: &[f64]) -> StateId {
        let row = (obs[0].clamp(0.0, 1.0) * (self.height - 1) as f64).round() as usize;
        let col = (obs[1].clamp(0.0, 1.0) * (self.width - 1) as f64).round() as usize;
        self.state(GridPos { row, col })
    }

    pub fn mdp(&self) -> TabularMdp {
        let n = self.n_states();
        let mut b = MdpBuilder::new(n, 1.0);
        for s in 0..n {
            for a in [UP, DOWN, LEFT, RIGHT] {
                if self.is_goal(s) {
                    b.action(s, a, 0.0, vec![(s, 1.0)]);
                } else {
                    b.action(s, a, -1.0, vec![(self.move_from(s, a), 1.0)]);
                }
            }
        }
        b.terminal(0).terminal(n - 1);
        b.build().expect("gridworld construction is valid")
    }
}

/// Gridworld MDP: four moves per cell, reward −1 per step, absorbing goal corners,
/// undiscounted, uniform start over non-goal cells.
pub fn make_gridworld(width: usize, height: usize) -> Result<TabularMdp> {
    Ok(Gridworld::new(width, height)?.mdp())
}

/// The gridworld as a simulator with normalized `(row, col)` observations.
#[derive(Debug, Clone)]
pub struct GridworldEnv {
    grid: Gridworld,
    bounds: ObsBounds,
    rng: Rng,
    state: StateId,
    steps: usize,
    max_steps: usize,
    done: bool,
}

impl GridworldEnv {
    /// Episodes are capped at `2·(width+height)` steps.
    pub fn new(grid: Gridworld) -> Self {
        Self {
            grid,
            bounds: ObsBounds::new(
                vec![0.0, 0.0],
                vec![(grid.height - 1) as f64, (grid.width - 1) as f64],
            )
            .expect("grid has at least two rows and columns"),
            rng: seeded(0),
            state: 0,
            steps: 0,
            max_steps: 2 * (grid.width + grid.height),
            done: true,
        }
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn grid(&self) -> Gridworld {
        self.grid
    }

    pub fn state(&self) -> StateId {
        self.state
    }

    pub fn set_state(&mut self, s: StateId) -> Vec<f64> {
        self.state = s;
        self.steps = 0;
        self.done = self.grid.is_goal(s);
        self.grid.observation(s)
    }
}

impl Environment for GridworldEnv {
    fn name(&self) -> &str {
        "gridworld"
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(4)
    }

    fn bounds(&self) -> &ObsBounds {
        &self.bounds
    }

    fn seed(&mut self, seed: u64) {
        self.rng = seeded(seed);
    }

    fn reset(&mut self) -> Vec<f64> {
        let n = self.grid.n_states();
        // uniform over the n-2 non-goal cells 1..n-1
        let s = self.rng.random_range(1..n - 1);
        self.set_state(s)
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep> {
        if self.done {
            return Err(Error::StepAfterDone);
        }
        let a = match action {
            Action::Discrete(a) if *a < 4 => *a,
            _ => {
                return Err(Error::Mismatch(
                    "gridworld expects a discrete action in 0..4".into(),
                ))
            }
        };
        self.state = self.grid.move_from(self.state, a);
        self.steps += 1;
        let terminal = self.grid.is_goal(self.state);
        let truncated = !terminal && self.steps >= self.max_steps;
        self.done = terminal || truncated;
        Ok(EnvStep {
            observation: self.grid.observation(self.state),
            reward: -1.0,
            done: self.done,
            truncated,
        })
    }

    fn reward_bound(&self) -> f64 {
        1.0
    }

    fn reward_floor(&self) -> f64 {
        -((2 * (self.grid.width + self.grid.height)) as f64)
    }
}
