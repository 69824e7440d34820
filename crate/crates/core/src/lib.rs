//! Optimal observation-perturbation attacks on reinforcement learning policies.
//!
//! The crate is organised bottom-up:
//!
//! * [`mdp`]: finite MDPs, exact policy evaluation and value iteration.
//! * [`envs`]: gridworld, MountainCar (discrete and continuous) and CartPole simulators.
//! * [`attack_mdp`]: the adversary's MDP over perturbed states, solved exactly for tabular problems.
//! * [`neural`]: small dense networks with exact input gradients, Adam, the ε-ball projection.
//! * [`agents`]: DQN, DDPG and a recurrent DQN variant, plus evaluation rollouts.
//! * [`attacks`]: gradient baselines and the DDPG-style attack trainers.
//! * [`bounds`]: policy smoothness and the attack-impact bounds.
//! * [`harness`]: configuration, evaluation sweeps, CSV output and reports.

pub mod agents;
pub mod attack_mdp;
pub mod attacks;
pub mod bounds;
pub mod config;
pub mod envs;
mod error;
pub mod harness;
pub mod mdp;
pub mod neural;
pub mod rng;

pub use error::{Error, Result};
