use advrl::agents::{train_ddpg, train_dqn, train_drqn_lite, AgentConfig, Algo, TrainedAgent};
use advrl::attacks::{train_attack_blackbox, train_attack_whitebox, AgentInTheLoop, AttackConfig, AttackKind, ExplorationMode};
use advrl::config::KeyValues;
use advrl::envs::{make_env, Norm};
use advrl::harness::{
    bound_report, evaluate, gridworld_demo, report, summarize, write_records, AgentSpec, AttackSpec, EvalPlan,
    LoadedAgent, LoadedAttack,
};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "advrl", version, about = "Train agents and observation attacks, evaluate and bound their impact")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a main agent and save it as a directory.
    TrainAgent {
        #[arg(long)]
        env: String,
        #[arg(long, default_value = "dqn")]
        algo: Algo,
        /// `key = value` file applied over the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `key=value` override applied after the file; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a neural attack against a saved agent.
    TrainAttack {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long, default_value = "blackbox")]
        algo: AttackKind,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        norm: Option<Norm>,
        /// `uniform` or `gradient[:p]`.
        #[arg(long)]
        exploration: Option<ExplorationMode>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate an agent, clean or attacked, and write one CSV row per episode.
    Eval {
        /// Agent directory, or `optimal` for the exact gridworld policy.
        #[arg(long)]
        agent: String,
        /// Trained attack directory.
        #[arg(long, conflicts_with = "attack_algo")]
        attack: Option<PathBuf>,
        /// none, huang, pattanaik, optimal or fgm.
        #[arg(long, default_value = "none")]
        attack_algo: String,
        #[arg(long, value_delimiter = ',', default_value = "0.05")]
        epsilons: Vec<f64>,
        #[arg(long, default_value = "l2")]
        norm: Norm,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, default_value_t = 30)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        master_seed: u64,
        /// Uniform actions at each episode start; defaults to the agent's setting.
        #[arg(long)]
        random_steps: Option<usize>,
        #[arg(long)]
        run_id: Option<String>,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Policy smoothness and the attack-impact bound.
    Bound {
        #[arg(long)]
        agent: String,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value = "l2")]
        norm: Norm,
        /// Clean rollouts supplying the sampled states (neural agents).
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exact gridworld values under the optimal, Huang and Pattanaik attacks.
    GridworldDemo {
        /// Radius in grid cells (ℓ1).
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
    },
    /// Summary tables and smoothed training curves from CSV files.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        csv: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Config file first, then `--set` overrides.
fn overrides(file: Option<&Path>, set: &[String]) -> Result<KeyValues> {
    let mut kv = match file {
        Some(path) => KeyValues::parse(
            &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )?,
        None => KeyValues::new(),
    };
    let mut cli = KeyValues::new();
    for entry in set {
        let Some((k, v)) = entry.split_once('=') else {
            bail!("`--set {entry}` is not KEY=VALUE");
        };
        cli.set(k.trim(), v.trim());
    }
    kv.merge(&cli);
    Ok(kv)
}

fn train_agent(env_name: &str, algo: Algo, kv: &KeyValues, seed: u64, out: &Path) -> Result<()> {
    let mut config = AgentConfig::preset(env_name, algo)?;
    config.apply(kv, &[])?;
    let mut env = make_env(env_name, config.frame_skip)?;
    println!("training {algo} on {env_name} for {} steps (seed {seed})", config.steps);
    let agent = match algo {
        Algo::Dqn => train_dqn(env.as_mut(), &config, seed)?,
        Algo::Ddpg => train_ddpg(env.as_mut(), &config, seed)?,
        Algo::Drqn => train_drqn_lite(env.as_mut(), &config, seed)?,
    };
    agent.save(out)?;
    let episodes = agent.log.episodes.len();
    match agent.log.final_mean(100) {
        Some(m) => println!("{episodes} episodes, mean return of the last 100: {m:.2}"),
        None => println!("no episode finished"),
    }
    println!("saved to {}", out.display());
    Ok(())
}

struct AttackArgs {
    kind: AttackKind,
    epsilon: Option<f64>,
    norm: Option<Norm>,
    exploration: Option<ExplorationMode>,
    kv: KeyValues,
    seed: u64,
}

fn train_attack(agent_dir: &Path, args: AttackArgs, out: &Path) -> Result<()> {
    let mut agent = TrainedAgent::load(agent_dir)?;
    let mut config = AttackConfig::preset(&agent.env)?;
    config.apply(&args.kv, &[])?;
    if let Some(e) = args.epsilon {
        config.epsilon = e;
    }
    if let Some(n) = args.norm {
        config.norm = n;
    }
    if let Some(x) = args.exploration {
        config.exploration = x;
    }
    config.validate()?;
    let mut env = make_env(&agent.env, agent.config.frame_skip)?;
    let expose = args.kind == AttackKind::WhiteBox || config.exploration != ExplorationMode::Uniform;
    println!(
        "training {} attack on {} (ε = {}, {}, {} steps)",
        args.kind, agent.env, config.epsilon, config.norm, config.steps
    );
    let trained = {
        let mut world = AgentInTheLoop::new(env.as_mut(), &mut agent, expose)?;
        match args.kind {
            AttackKind::BlackBox => train_attack_blackbox(&mut world, &config, args.seed)?,
            AttackKind::WhiteBox => train_attack_whitebox(&mut world, &config, args.seed)?,
        }
    };
    trained.save(out)?;
    if let Some(m) = trained.log.final_mean(100) {
        println!("agent mean return over the last 100 training episodes: {m:.2}");
    }
    println!("saved to {}", out.display());
    Ok(())
}

fn eval(agent: &str, attack: AttackSpec, plan: &EvalPlan, csv: &Path) -> Result<()> {
    let mut agent = LoadedAgent::load(&agent.parse::<AgentSpec>()?)?;
    let attack = LoadedAttack::load(&attack)?;
    let records = evaluate(&mut agent, &attack, plan)?;
    if let Some(parent) = csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_records(&records, fs::File::create(csv).with_context(|| format!("creating {}", csv.display()))?)?;
    println!("{} episodes written to {}", records.len(), csv.display());
    // a clean run summarises on its own; attacked runs need their baseline
    if let Ok(rows) = summarize(&records) {
        for r in rows {
            println!("{} ε={} mean {:.2} std {:.2}", r.attack_algo, r.epsilon, r.mean, r.std);
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::TrainAgent {
            env,
            algo,
            config,
            set,
            seed,
            out,
        } => train_agent(&env, algo, &overrides(config.as_deref(), &set)?, seed, &out),
        Command::TrainAttack {
            agent,
            algo,
            epsilon,
            norm,
            exploration,
            config,
            set,
            seed,
            out,
        } => {
            let args = AttackArgs {
                kind: algo,
                epsilon,
                norm,
                exploration,
                kv: overrides(config.as_deref(), &set)?,
                seed,
            };
            train_attack(&agent, args, &out)
        }
        Command::Eval {
            agent,
            attack,
            attack_algo,
            epsilons,
            norm,
            seeds,
            episodes,
            master_seed,
            random_steps,
            run_id,
            csv,
        } => {
            let attack = match attack {
                Some(dir) => AttackSpec::Trained(dir),
                None => attack_algo.parse()?,
            };
            let plan = EvalPlan {
                epsilons,
                norm,
                seeds,
                episodes,
                master_seed,
                random_steps,
                run_id,
            };
            eval(&agent, attack, &plan, &csv)
        }
        Command::Bound {
            agent,
            epsilon,
            norm,
            episodes,
            seed,
        } => {
            let mut agent = LoadedAgent::load(&agent.parse::<AgentSpec>()?)?;
            print!("{}", bound_report(&mut agent, epsilon, norm, episodes, seed)?);
            Ok(())
        }
        Command::GridworldDemo { epsilon, gamma } => {
            print!("{}", gridworld_demo(epsilon, gamma)?);
            Ok(())
        }
        Command::Report { csv, out } => {
            for path in report(&csv, &out)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}
