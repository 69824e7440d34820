//! Experiment orchestration: evaluation sweeps over seeds, episodes and
//! attack radii, CSV records, summary statistics and plot-ready reports.

mod bound;
mod demo;
mod eval;
mod report;
mod summary;

pub use bound::{bound_report, BoundReport};
pub use demo::{gridworld_demo, DemoTables};
pub use eval::{
    evaluate, read_records, run_eval, seed_stream, write_records, AgentSpec, AttackSpec, EvalPlan, EvalRecord,
    LoadedAgent, LoadedAttack, RunConfig, EVAL_HEADER,
};
pub use report::{moving_average, report, SMOOTHING_WINDOW};
pub use summary::{env_reward_floor, performance_loss, summarize, summarize_with, SummaryRow};
