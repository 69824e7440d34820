use super::replay::{ReplayBuffer, Transition};
use super::AgentConfig;
use crate::envs::{Action, Environment};
use crate::rng::{stream_id, substream, Rng};
use crate::{Error, Result};

/// One finished training episode.
#[derive(Debug, Clone)]
pub struct EpisodeStat {
    pub episode: usize,
    /// Environment steps taken when the episode ended.
    pub end_step: usize,
    pub ret: f64,
    pub length: usize,
    /// Mean training loss over the episode's steps, NaN before learning starts.
    pub mean_loss: f64,
}

// NaN losses compare equal so that identical runs give equal logs
impl PartialEq for EpisodeStat {
    fn eq(&self, other: &Self) -> bool {
        self.episode == other.episode
            && self.end_step == other.end_step
            && self.ret.to_bits() == other.ret.to_bits()
            && self.length == other.length
            && (self.mean_loss.to_bits() == other.mean_loss.to_bits()
                || (self.mean_loss.is_nan() && other.mean_loss.is_nan()))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeStat>,
}

impl TrainingLog {
    /// Mean return of the last `n` episodes (fewer if fewer exist).
    pub fn final_mean(&self, n: usize) -> Option<f64> {
        let k = self.episodes.len().min(n);
        (k > 0).then(|| {
            self.episodes[self.episodes.len() - k..]
                .iter()
                .map(|e| e.ret)
                .sum::<f64>()
                / k as f64
        })
    }

    pub fn returns(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.ret).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["episode", "end_step", "return", "length", "mean_loss"])?;
        for e in &self.episodes {
            out.write_record([
                e.episode.to_string(),
                e.end_step.to_string(),
                e.ret.to_string(),
                e.length.to_string(),
                e.mean_loss.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let mut episodes = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            episodes.push(EpisodeStat {
                episode: csv_field(&rec, 0, line)?,
                end_step: csv_field(&rec, 1, line)?,
                ret: csv_field(&rec, 2, line)?,
                length: csv_field(&rec, 3, line)?,
                mean_loss: csv_field(&rec, 4, line)?,
            });
        }
        Ok(Self { episodes })
    }
}

pub(crate) fn csv_field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    k: usize,
    line: usize,
) -> Result<T> {
    let raw = rec.get(k).ok_or(Error::Parse {
        line,
        msg: format!("missing column {k}"),
    })?;
    raw.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse `{raw}` in column {k}"),
    })
}

/// The algorithm-specific half of an off-policy training loop.
pub(crate) trait Learner {
    /// Exploratory action for step `t`, in the form stored in the replay buffer.
    fn explore(&mut self, obs: &[f64], t: usize, rng: &mut Rng) -> Result<Vec<f64>>;
    fn env_action(&self, stored: &[f64]) -> Action;
    fn episode_start(&mut self) {}
    /// One gradient update from the buffer; returns the loss.
    fn update(&mut self, buffer: &ReplayBuffer<Transition>, rng: &mut Rng) -> Result<f64>;
    /// Called after every environment step (target refreshes).
    fn after_step(&mut self, t: usize);
}

/// Aborts on a non-finite loss or one above `1e6`.
pub(crate) fn divergence_guard(step: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() || loss > 1e6 {
        return Err(Error::Divergence { step, loss });
    }
    Ok(())
}

pub(crate) fn run_training(
    env: &mut dyn Environment,
    config: &AgentConfig,
    seed: u64,
    learner: &mut dyn Learner,
) -> Result<TrainingLog> {
    let mut rng = substream(seed, "train", 0, 0);
    env.seed(stream_id("train-env", seed, 0));
    let mut buffer = ReplayBuffer::new(config.memory);
    let mut log = TrainingLog::default();
    let mut obs = env.reset();
    learner.episode_start();
    let (mut ret, mut length, mut loss_sum, mut loss_count) = (0.0, 0usize, 0.0, 0usize);
    let mut random_left = config.train_random_steps;
    for t in 0..config.steps {
        let stored = if random_left > 0 {
            random_left -= 1;
            let a = super::random_action(&env.action_space(), &mut rng);
            match a {
                Action::Discrete(i) => vec![i as f64],
                Action::Continuous(v) => v,
            }
        } else {
            learner.explore(&obs, t, &mut rng)?
        };
        let step = env.step(&learner.env_action(&stored))?;
        ret += step.reward;
        length += 1;
        buffer.push(Transition {
            obs: std::mem::take(&mut obs),
            action: stored,
            reward: step.reward,
            next_obs: step.observation.clone(),
            terminal: step.done && (!step.truncated || config.time_limit_terminal),
            episode_end: step.done,
        });
        obs = step.observation;
        if t >= config.warmup && buffer.len() >= config.batch {
            let loss = learner.update(&buffer, &mut rng)?;
            divergence_guard(t, loss)?;
            loss_sum += loss;
            loss_count += 1;
        }
        learner.after_step(t);
        if step.done {
            log.episodes.push(EpisodeStat {
                episode: log.episodes.len(),
                end_step: t + 1,
                ret,
                length,
                mean_loss: if loss_count > 0 {
                    loss_sum / loss_count as f64
                } else {
                    f64::NAN
                },
            });
            (ret, length, loss_sum, loss_count) = (0.0, 0, 0.0, 0);
            random_left = config.train_random_steps;
            obs = env.reset();
            learner.episode_start();
        }
    }
    Ok(log)
}
