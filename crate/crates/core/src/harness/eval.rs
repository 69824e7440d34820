use crate::agents::{evaluate_policy, Agent, ObservationAttack, TabularAgent, TrainedAgent};
use crate::attack_mdp::{build_attack_mdp, solve_optimal_attack, NeighborSet, RewardMode};
use crate::attacks::{huang_chi, pattanaik_chi, FgmAttack, GridObservationAttack, NeuralAttack};
use crate::envs::{make_env, Environment, Gridworld, Norm};
use crate::mdp::{greedy_uniform_policy, policy_evaluation, q_from_policy, value_iteration, DEFAULT_TOLERANCE};
use crate::rng::stream_id;
use crate::{Error, Result};
use std::fmt;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::str::FromStr;

/// Where the evaluated agent comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentSpec {
    /// A directory written by [`TrainedAgent::save`].
    Dir(PathBuf),
    /// The exact optimal policy of the 6×6 gridworld (ties split uniformly).
    GridOptimal,
}

impl FromStr for AgentSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "optimal" => AgentSpec::GridOptimal,
            dir => AgentSpec::Dir(PathBuf::from(dir)),
        })
    }
}

/// Which attack perturbs the agent's observations.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackSpec {
    None,
    Huang,
    Pattanaik,
    /// Exact solution of the attack MDP (tabular agents only).
    Optimal,
    Fgm,
    /// A directory written by [`NeuralAttack::save`].
    Trained(PathBuf),
}

impl AttackSpec {
    pub fn name(&self) -> &str {
        match self {
            AttackSpec::None => "none",
            AttackSpec::Huang => "huang",
            AttackSpec::Pattanaik => "pattanaik",
            AttackSpec::Optimal => "optimal",
            AttackSpec::Fgm => "fgm",
            AttackSpec::Trained(_) => "trained",
        }
    }
}

impl FromStr for AttackSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => AttackSpec::None,
            "huang" => AttackSpec::Huang,
            "pattanaik" => AttackSpec::Pattanaik,
            "optimal" => AttackSpec::Optimal,
            "fgm" => AttackSpec::Fgm,
            _ => {
                return Err(Error::UnknownName {
                    kind: "attack algorithm",
                    name: s.to_string(),
                })
            }
        })
    }
}

/// Seeds, episodes and radii of one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPlan {
    /// Attack radii; ignored without an attack. Tabular attacks measure them
    /// in grid cells (ℓ1), the others in normalized observation space.
    pub epsilons: Vec<f64>,
    pub norm: Norm,
    pub seeds: usize,
    pub episodes: usize,
    pub master_seed: u64,
    /// Uniform actions at the start of each episode; `None` takes the agent's
    /// `test_random_steps`.
    pub random_steps: Option<usize>,
    /// Defaults to `env-agent-attack`.
    pub run_id: Option<String>,
}

impl Default for EvalPlan {
    fn default() -> Self {
        Self {
            epsilons: vec![0.05],
            norm: Norm::L2,
            seeds: 10,
            episodes: 30,
            master_seed: 0,
            random_steps: None,
            run_id: None,
        }
    }
}

impl EvalPlan {
    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 || self.episodes == 0 {
            return Err(Error::InvalidConfig("seeds and episodes must be ≥ 1".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e >= 0.0)) {
            return Err(Error::InvalidConfig(format!("attack radius must be ≥ 0, got {e}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: String,
    pub agent: AgentSpec,
    pub attack: AttackSpec,
    pub plan: EvalPlan,
}

/// An agent ready to act.
#[derive(Debug, Clone)]
pub enum LoadedAgent {
    Trained(TrainedAgent),
    Tabular(TabularAgent),
}

impl LoadedAgent {
    pub fn load(spec: &AgentSpec) -> Result<Self> {
        match spec {
            AgentSpec::Dir(dir) => Ok(LoadedAgent::Trained(TrainedAgent::load(dir)?)),
            AgentSpec::GridOptimal => {
                let grid = Gridworld::new(6, 6)?;
                let mdp = grid.mdp();
                let (v, _) = value_iteration(&mdp, DEFAULT_TOLERANCE)?;
                Ok(LoadedAgent::Tabular(TabularAgent::new(
                    grid,
                    greedy_uniform_policy(&mdp, &v, 1e-9)?,
                )?))
            }
        }
    }

    pub fn env_name(&self) -> &str {
        match self {
            LoadedAgent::Trained(a) => &a.env,
            LoadedAgent::Tabular(_) => "gridworld",
        }
    }

    pub fn algo_name(&self) -> &str {
        match self {
            LoadedAgent::Trained(a) => a.algo().as_str(),
            LoadedAgent::Tabular(_) => "tabular",
        }
    }

    pub fn frame_skip(&self) -> usize {
        match self {
            LoadedAgent::Trained(a) => a.config.frame_skip,
            LoadedAgent::Tabular(_) => 1,
        }
    }

    pub fn test_random_steps(&self) -> usize {
        match self {
            LoadedAgent::Trained(a) => a.config.test_random_steps,
            LoadedAgent::Tabular(_) => 0,
        }
    }

    /// Environment this agent was trained for.
    pub fn make_env(&self) -> Result<Box<dyn Environment>> {
        make_env(self.env_name(), self.frame_skip())
    }

    pub fn as_agent_mut(&mut self) -> &mut dyn Agent {
        match self {
            LoadedAgent::Trained(a) => a,
            LoadedAgent::Tabular(a) => a,
        }
    }
}

/// An attack ready to be instantiated at any radius.
#[derive(Debug, Clone)]
pub enum LoadedAttack {
    None,
    Huang,
    Pattanaik,
    Optimal,
    Fgm,
    Trained(NeuralAttack),
}

impl LoadedAttack {
    pub fn load(spec: &AttackSpec) -> Result<Self> {
        Ok(match spec {
            AttackSpec::None => LoadedAttack::None,
            AttackSpec::Huang => LoadedAttack::Huang,
            AttackSpec::Pattanaik => LoadedAttack::Pattanaik,
            AttackSpec::Optimal => LoadedAttack::Optimal,
            AttackSpec::Fgm => LoadedAttack::Fgm,
            AttackSpec::Trained(dir) => LoadedAttack::Trained(NeuralAttack::load(dir)?),
        })
    }

    /// Column value in the records: trained attacks report their kind.
    pub fn name(&self) -> &str {
        match self {
            LoadedAttack::None => "none",
            LoadedAttack::Huang => "huang",
            LoadedAttack::Pattanaik => "pattanaik",
            LoadedAttack::Optimal => "optimal",
            LoadedAttack::Fgm => "fgm",
            LoadedAttack::Trained(a) => a.kind.as_str(),
        }
    }

    /// Norm the attack actually uses; trained attacks keep their own.
    fn norm(&self, requested: Norm) -> Norm {
        match self {
            LoadedAttack::Trained(a) => a.config.norm,
            LoadedAttack::Huang | LoadedAttack::Pattanaik | LoadedAttack::Optimal => Norm::L1,
            _ => requested,
        }
    }

    fn instantiate(
        &self,
        agent: &LoadedAgent,
        epsilon: f64,
        norm: Norm,
    ) -> Result<Option<Box<dyn ObservationAttack>>> {
        let tabular = || match agent {
            LoadedAgent::Tabular(a) => Ok(a),
            LoadedAgent::Trained(_) => Err(Error::Mismatch(format!(
                "`{}` needs a tabular gridworld agent",
                self.name()
            ))),
        };
        Ok(match self {
            LoadedAttack::None => None,
            LoadedAttack::Fgm => Some(Box::new(FgmAttack { epsilon, norm })),
            LoadedAttack::Trained(a) => {
                if a.env != agent.env_name() {
                    return Err(Error::Mismatch(format!(
                        "attack trained on `{}`, agent on `{}`",
                        a.env,
                        agent.env_name()
                    )));
                }
                Some(Box::new(a.with_epsilon(epsilon)))
            }
            LoadedAttack::Huang | LoadedAttack::Pattanaik | LoadedAttack::Optimal => {
                let agent = tabular()?;
                let grid = *agent.grid();
                let mdp = grid.mdp();
                let pi = agent.policy();
                let neighbors = NeighborSet::new(mdp.n_states(), epsilon, &grid)?;
                let chi = match self {
                    LoadedAttack::Huang => huang_chi(&mdp, pi, &neighbors)?,
                    LoadedAttack::Pattanaik => {
                        let v = policy_evaluation(&mdp, pi, DEFAULT_TOLERANCE)?;
                        pattanaik_chi(&mdp, pi, &q_from_policy(&mdp, pi, &v)?, &neighbors)?
                    }
                    _ => {
                        let attack = build_attack_mdp(&mdp, pi, epsilon, &grid, RewardMode::NegateAgent)?;
                        solve_optimal_attack(&attack, DEFAULT_TOLERANCE)?.chi
                    }
                };
                Some(Box::new(GridObservationAttack { grid, chi }))
            }
        })
    }
}

/// One evaluated episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub run_id: String,
    pub env: String,
    pub agent_algo: String,
    pub attack_algo: String,
    pub epsilon: f64,
    pub norm: Norm,
    pub seed: usize,
    pub episode: usize,
    pub ret: f64,
    pub length: usize,
}

pub const EVAL_HEADER: [&str; 10] = [
    "run_id",
    "env",
    "agent_algo",
    "attack_algo",
    "epsilon",
    "norm",
    "seed",
    "episode",
    "return",
    "length",
];

/// Evaluation seed for seed index `i` of `master`.
pub fn seed_stream(master: u64, i: usize) -> u64 {
    stream_id("eval-seed", master, i as u64)
}

/// Loads the agent and attack named by `config` and evaluates them.
pub fn run_eval(config: &RunConfig) -> Result<Vec<EvalRecord>> {
    let mut agent = LoadedAgent::load(&config.agent)?;
    if agent.env_name() != config.env {
        return Err(Error::Mismatch(format!(
            "agent trained on `{}`, run configured for `{}`",
            agent.env_name(),
            config.env
        )));
    }
    let attack = LoadedAttack::load(&config.attack)?;
    evaluate(&mut agent, &attack, &config.plan)
}

/// Episodes for every `(ε, seed, episode)` in order. Every radius replays
/// the same environment streams, so differences come from the attack alone.
pub fn evaluate(agent: &mut LoadedAgent, attack: &LoadedAttack, plan: &EvalPlan) -> Result<Vec<EvalRecord>> {
    plan.validate()?;
    let mut env = agent.make_env()?;
    let random_steps = plan.random_steps.unwrap_or_else(|| agent.test_random_steps());
    let norm = attack.norm(plan.norm);
    let epsilons = match attack {
        LoadedAttack::None => vec![0.0],
        _ => plan.epsilons.clone(),
    };
    let run_id = plan
        .run_id
        .clone()
        .unwrap_or_else(|| format!("{}-{}-{}", agent.env_name(), agent.algo_name(), attack.name()));
    let mut out = Vec::new();
    for &epsilon in &epsilons {
        let mut adversary = attack.instantiate(agent, epsilon, norm)?;
        for seed in 0..plan.seeds {
            let results = evaluate_policy(
                env.as_mut(),
                agent.as_agent_mut(),
                adversary.as_mut().map(|a| a.as_mut() as &mut dyn ObservationAttack),
                plan.episodes,
                random_steps,
                seed_stream(plan.master_seed, seed),
            )?;
            out.extend(results.into_iter().map(|r| EvalRecord {
                run_id: run_id.clone(),
                env: agent.env_name().to_string(),
                agent_algo: agent.algo_name().to_string(),
                attack_algo: attack.name().to_string(),
                epsilon,
                norm,
                seed,
                episode: r.episode,
                ret: r.ret,
                length: r.length,
            }));
        }
    }
    Ok(out)
}

pub fn write_records<W: Write>(records: &[EvalRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(EVAL_HEADER)?;
    for r in records {
        out.write_record([
            r.run_id.clone(),
            r.env.clone(),
            r.agent_algo.clone(),
            r.attack_algo.clone(),
            r.epsilon.to_string(),
            r.norm.to_string(),
            r.seed.to_string(),
            r.episode.to_string(),
            r.ret.to_string(),
            r.length.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<EvalRecord>> {
    let mut reader = csv::Reader::from_reader(r);
    let header = reader.headers()?.clone();
    if header.iter().ne(EVAL_HEADER) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `{}`", EVAL_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |k: usize| -> Result<&str> {
            rec.get(k).ok_or(Error::Parse {
                line,
                msg: format!("missing column `{}`", EVAL_HEADER[k]),
            })
        };
        let parse = |k: usize| -> Result<f64> {
            let raw = field(k)?;
            raw.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("cannot parse `{raw}` as `{}`", EVAL_HEADER[k]),
            })
        };
        out.push(EvalRecord {
            run_id: field(0)?.to_string(),
            env: field(1)?.to_string(),
            agent_algo: field(2)?.to_string(),
            attack_algo: field(3)?.to_string(),
            epsilon: parse(4)?,
            norm: field(5)?.parse()?,
            seed: parse(6)? as usize,
            episode: parse(7)? as usize,
            ret: parse(8)?,
            length: parse(9)? as usize,
        });
    }
    Ok(out)
}

impl fmt::Display for AttackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackSpec::Trained(dir) => write!(f, "{}", dir.display()),
            other => f.write_str(other.name()),
        }
    }
}
