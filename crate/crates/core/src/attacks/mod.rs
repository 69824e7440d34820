//! Observation attacks: tabular baselines, the fast-gradient baseline, and
//! neural adversaries trained on the attack MDP.
//!
//! Every attack maps a true observation `s` to some `s̄` with `d(s, s̄) ≤ ε`
//! in normalized observation space.

mod config;
mod fgm;
mod neural;
mod tabular;
mod train;

pub use crate::agents::ObservationAttack;
pub use config::{AttackConfig, ExplorationMode};
pub use fgm::{fgm_attack, FgmAttack};
pub use neural::{AttackKind, NeuralAttack};
pub use tabular::{huang_attack, huang_chi, pattanaik_attack, pattanaik_chi, GridObservationAttack};
pub use train::{
    exploration_noise, mix_gradient_noise, train_attack_blackbox, train_attack_whitebox,
    AgentInTheLoop, AttackEnvironment,
};
