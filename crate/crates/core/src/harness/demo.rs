use crate::attack_mdp::{build_attack_mdp, perturbed_policy, solve_optimal_attack, NeighborSet, RewardMode, TabularAttack};
use crate::attacks::{huang_chi, pattanaik_chi};
use crate::envs::Gridworld;
use crate::mdp::{greedy_uniform_policy, policy_evaluation, q_from_policy, value_iteration, TabularMdp, TabularPolicy};
use crate::Result;
use std::fmt;

const TOLERANCE: f64 = 1e-10;

/// Per-cell values of the optimal gridworld policy, clean and under the
/// three tabular attacks.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoTables {
    pub width: usize,
    pub height: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub clean: Vec<f64>,
    pub optimal: Vec<f64>,
    pub huang: Vec<f64>,
    pub pattanaik: Vec<f64>,
    pub optimal_chi: TabularAttack,
}

fn attacked_values(mdp: &TabularMdp, pi: &TabularPolicy, chi: &TabularAttack) -> Result<Vec<f64>> {
    let composed = perturbed_policy(mdp, pi, chi)?;
    Ok(policy_evaluation(mdp, &composed, TOLERANCE)?.values)
}

/// Solves the 6×6 gridworld exactly at discount `gamma` (1 for the
/// undiscounted task) and evaluates the optimal policy under the optimal,
/// Huang and Pattanaik attacks of radius `epsilon` in grid cells (ℓ1).
/// Undiscounted attacks that trap the agent fail to converge and are reported
/// as errors.
pub fn gridworld_demo(epsilon: f64, gamma: f64) -> Result<DemoTables> {
    let grid = Gridworld::new(6, 6)?;
    let mdp = grid.mdp().with_gamma(gamma)?;
    let (v, _) = value_iteration(&mdp, TOLERANCE)?;
    let pi = greedy_uniform_policy(&mdp, &v, 1e-9)?;
    let neighbors = NeighborSet::new(mdp.n_states(), epsilon, &grid)?;
    let clean = policy_evaluation(&mdp, &pi, TOLERANCE)?;
    let q = q_from_policy(&mdp, &pi, &clean)?;
    let attack = build_attack_mdp(&mdp, &pi, epsilon, &grid, RewardMode::NegateAgent)?;
    let optimal_chi = solve_optimal_attack(&attack, TOLERANCE)?.chi;
    Ok(DemoTables {
        width: grid.width,
        height: grid.height,
        epsilon,
        gamma,
        clean: clean.values.clone(),
        optimal: attacked_values(&mdp, &pi, &optimal_chi)?,
        huang: attacked_values(&mdp, &pi, &huang_chi(&mdp, &pi, &neighbors)?)?,
        pattanaik: attacked_values(&mdp, &pi, &pattanaik_chi(&mdp, &pi, &q, &neighbors)?)?,
        optimal_chi,
    })
}

impl fmt::Display for DemoTables {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let panels = [
            ("optimal attack", &self.optimal),
            ("huang", &self.huang),
            ("pattanaik", &self.pattanaik),
        ];
        let cell = 7;
        let panel_width = cell * self.width;
        writeln!(f, "perturbed-policy values, ε = {}, γ = {}", self.epsilon, self.gamma)?;
        for (name, _) in &panels {
            write!(f, "{name:<panel_width$}   ")?;
        }
        writeln!(f)?;
        for r in 0..self.height {
            for (_, values) in &panels {
                for c in 0..self.width {
                    write!(f, "{:>cell$.2}", values[r * self.width + c])?;
                }
                write!(f, "   ")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
