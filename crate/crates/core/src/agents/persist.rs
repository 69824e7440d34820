//! Agent directories: `agent.txt` (environment, action space and the config
//! snapshot), network files in the text weight format, and `log.csv`.

use super::{AgentConfig, AgentModel, Algo, TrainedAgent, TrainingLog};
use crate::config::KeyValues;
use crate::envs::ActionSpace;
use crate::neural::{Mlp, RecurrentCell};
use crate::{Error, Result};
use std::fs;
use std::path::Path;

fn space_to_text(space: &ActionSpace) -> String {
    match space {
        ActionSpace::Discrete(n) => format!("discrete {n}"),
        ActionSpace::Continuous { dim, low, high } => format!("continuous {dim} {low} {high}"),
    }
}

fn space_from_text(text: &str) -> Result<ActionSpace> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    let bad = || Error::InvalidConfig(format!("bad action space `{text}`"));
    match parts.as_slice() {
        ["discrete", n] => Ok(ActionSpace::Discrete(n.parse().map_err(|_| bad())?)),
        ["continuous", d, l, h] => Ok(ActionSpace::Continuous {
            dim: d.parse().map_err(|_| bad())?,
            low: l.parse().map_err(|_| bad())?,
            high: h.parse().map_err(|_| bad())?,
        }),
        _ => Err(bad()),
    }
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path)
        .map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))
}

impl TrainedAgent {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut kv = self.config.to_kv();
        kv.set("env", &self.env)
            .set("action_space", space_to_text(&self.action_space));
        fs::write(dir.join("agent.txt"), kv.to_text())?;
        match &self.model {
            AgentModel::Dqn(q) => fs::write(dir.join("q.net"), q.to_text())?,
            AgentModel::Ddpg { actor, critic } => {
                fs::write(dir.join("actor.net"), actor.to_text())?;
                fs::write(dir.join("critic.net"), critic.to_text())?;
            }
            AgentModel::Drqn(cell) => fs::write(dir.join("q.net"), cell.to_text())?,
        }
        self.log.write_csv(fs::File::create(dir.join("log.csv"))?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let kv = KeyValues::parse(&read(dir, "agent.txt")?)?;
        let env: String = kv
            .get("env")?
            .ok_or_else(|| Error::InvalidConfig("agent.txt lacks `env`".into()))?;
        let algo: Algo = kv
            .get("algo")?
            .ok_or_else(|| Error::InvalidConfig("agent.txt lacks `algo`".into()))?;
        let space = space_from_text(
            kv.raw("action_space")
                .ok_or_else(|| Error::InvalidConfig("agent.txt lacks `action_space`".into()))?,
        )?;
        let preset_env = if algo == Algo::Ddpg { "mountaincar-continuous" } else { "gridworld" };
        let mut config = AgentConfig::preset(preset_env, algo)?;
        config.apply(&kv, &["env", "action_space"])?;
        let model = match algo {
            Algo::Dqn => AgentModel::Dqn(Mlp::from_text(&read(dir, "q.net")?)?),
            Algo::Ddpg => AgentModel::Ddpg {
                actor: Mlp::from_text(&read(dir, "actor.net")?)?,
                critic: Mlp::from_text(&read(dir, "critic.net")?)?,
            },
            Algo::Drqn => AgentModel::Drqn(RecurrentCell::from_text(&read(dir, "q.net")?)?),
        };
        let mut agent = TrainedAgent::new(&env, config, model, space);
        if dir.join("log.csv").exists() {
            agent.log = TrainingLog::read_csv(fs::File::open(dir.join("log.csv"))?)?;
        }
        Ok(agent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_mountaincar, Environment, Gridworld, GridworldEnv};

    #[test]
    fn save_load_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let mut env = GridworldEnv::new(Gridworld::new(3, 3).unwrap());
        let mut cfg = AgentConfig::preset("gridworld", Algo::Dqn).unwrap();
        cfg.steps = 300;
        cfg.warmup = 50;
        let agent = crate::agents::train_dqn(&mut env, &cfg, 1).unwrap();
        agent.save(tmp.path()).unwrap();
        let back = TrainedAgent::load(tmp.path()).unwrap();
        assert_eq!(back.model, agent.model);
        assert_eq!(back.config, agent.config);
        assert_eq!(back.env, "gridworld");
        assert_eq!(back.log.returns(), agent.log.returns());

        let mut c = AgentConfig::preset("mountaincar-continuous", Algo::Ddpg).unwrap();
        c.steps = 0;
        c.hidden = vec![4];
        c.actor_hidden = vec![3];
        let mut mc = make_mountaincar(true);
        let ddpg = crate::agents::train_ddpg(&mut mc, &c, 2).unwrap();
        let dir = tmp.path().join("ddpg");
        ddpg.save(&dir).unwrap();
        let back = TrainedAgent::load(&dir).unwrap();
        assert_eq!(back.model, ddpg.model);
        assert_eq!(
            crate::agents::Agent::action_space(&back),
            mc.action_space()
        );
    }

    #[test]
    fn missing_directory_reported() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(
            TrainedAgent::load(&tmp.path().join("nope")),
            Err(Error::MissingArtifact(_))
        ));
    }
}
