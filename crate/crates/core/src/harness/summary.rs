use super::EvalRecord;
use crate::envs::{make_env, Norm};
use crate::{Error, Result};

/// Statistics of one `(env, agent, attack, ε, norm)` group.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub env: String,
    pub agent_algo: String,
    pub attack_algo: String,
    pub epsilon: f64,
    pub norm: Norm,
    pub episodes: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Mean return of the matching `none` group.
    pub clean_mean: f64,
    pub reward_floor: f64,
    /// `None` when the clean mean already sits at the floor.
    pub loss_pct: Option<f64>,
}

/// `100·(clean − attacked)/(clean − floor)`.
pub fn performance_loss(clean: f64, attacked: f64, floor: f64) -> Option<f64> {
    let span = clean - floor;
    (span.abs() > f64::EPSILON).then(|| 100.0 * (clean - attacked) / span)
}

/// Worst episode return declared by the named environment.
pub fn env_reward_floor(env: &str) -> Result<f64> {
    Ok(make_env(env, 1)?.reward_floor())
}

/// [`summarize_with`] using the registered environments' floors.
pub fn summarize(records: &[EvalRecord]) -> Result<Vec<SummaryRow>> {
    summarize_with(records, &env_reward_floor)
}

/// Groups `records` in order of first appearance. Each `(env, agent)` pair
/// needs `none` records, which serve as the clean baseline.
pub fn summarize_with(records: &[EvalRecord], floor: &dyn Fn(&str) -> Result<f64>) -> Result<Vec<SummaryRow>> {
    let key = |r: &EvalRecord| {
        (
            r.env.clone(),
            r.agent_algo.clone(),
            r.attack_algo.clone(),
            r.epsilon.to_bits(),
            r.norm,
        )
    };
    let mut groups: Vec<(_, Vec<f64>)> = Vec::new();
    for r in records {
        let k = key(r);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(r.ret),
            None => groups.push((k, vec![r.ret])),
        }
    }
    let clean_mean = |env: &str, agent: &str| -> Result<f64> {
        let rets: Vec<f64> = groups
            .iter()
            .filter(|((e, a, atk, _, _), _)| e == env && a == agent && atk == "none")
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        if rets.is_empty() {
            return Err(Error::MissingArtifact(format!(
                "no clean (`none`) baseline for {agent} on {env}"
            )));
        }
        Ok(mean(&rets))
    };
    groups
        .iter()
        .map(|((env, agent, attack, eps, norm), rets)| {
            let clean = clean_mean(env, agent)?;
            let floor = floor(env)?;
            let m = mean(rets);
            Ok(SummaryRow {
                env: env.clone(),
                agent_algo: agent.clone(),
                attack_algo: attack.clone(),
                epsilon: f64::from_bits(*eps),
                norm: *norm,
                episodes: rets.len(),
                mean: m,
                std: (rets.iter().map(|r| (r - m).powi(2)).sum::<f64>() / rets.len() as f64).sqrt(),
                min: rets.iter().copied().fold(f64::INFINITY, f64::min),
                max: rets.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                clean_mean: clean,
                reward_floor: floor,
                loss_pct: performance_loss(clean, m, floor),
            })
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_endpoints() {
        assert_eq!(performance_loss(-100.0, -100.0, -200.0), Some(0.0));
        assert_eq!(performance_loss(-100.0, -200.0, -200.0), Some(100.0));
        assert_eq!(performance_loss(-200.0, -200.0, -200.0), None);
    }

    #[test]
    fn baseline_required() {
        let r = EvalRecord {
            run_id: "x".into(),
            env: "mountaincar".into(),
            agent_algo: "dqn".into(),
            attack_algo: "fgm".into(),
            epsilon: 0.1,
            norm: Norm::L2,
            seed: 0,
            episode: 0,
            ret: -150.0,
            length: 50,
        };
        assert!(summarize(&[r.clone()]).is_err());
        let clean = EvalRecord {
            attack_algo: "none".into(),
            epsilon: 0.0,
            ret: -100.0,
            ..r.clone()
        };
        let rows = summarize(&[clean, r]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].loss_pct, Some(50.0));
        assert_eq!(rows[1].reward_floor, -200.0);
    }
}
