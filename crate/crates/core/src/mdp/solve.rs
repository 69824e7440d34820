use super::{QFunction, TabularMdp, TabularPolicy, ValueFunction};
use crate::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Sweep budget for iterative solvers.
///
/// Undiscounted problems get `10·n²` sweeps. Discounted ones get enough sweeps
/// for the contraction to shrink an initial error of `R/(1-γ)` below `tol`, with
/// a floor of `10·n²`.
pub fn iteration_cap(mdp: &TabularMdp, tol: f64) -> usize {
    let n = mdp.n_states();
    let base = 10 * n * n;
    let gamma = mdp.gamma();
    if gamma >= 1.0 {
        return base.max(100);
    }
    if gamma <= 0.0 {
        return base.max(10);
    }
    let scale = mdp.reward_bound().max(1e-300) / (1.0 - gamma);
    let needed = ((tol / scale).ln() / gamma.ln()).ceil().max(0.0) as usize;
    base.max(2 * needed + 100)
}

/// Iterative evaluation of `policy` until `‖V − T^π V‖∞ ≤ tol`.
pub fn policy_evaluation(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    tol: f64,
) -> Result<ValueFunction> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    policy.check_against(mdp)?;
    let n = mdp.n_states();
    let cap = iteration_cap(mdp, tol);
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..cap {
        residual = 0.0;
        for s in 0..n {
            let v: f64 = policy
                .probs(s)
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(i, p)| p * mdp.backup(s, i, &values))
                .sum();
            residual = residual.max((v - values[s]).abs());
            next[s] = v;
        }
        std::mem::swap(&mut values, &mut next);
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            return Ok(ValueFunction { values });
        }
    }
    Err(Error::NonConvergence {
        iterations: cap,
        residual,
    })
}

/// Value iteration with a greedy deterministic policy extracted from the final values.
///
/// Near-ties (within `2·tol`) in the greedy step go to the lowest action id.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<(ValueFunction, TabularPolicy)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let n = mdp.n_states();
    let cap = iteration_cap(mdp, tol);
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut converged = false;
    for _ in 0..cap {
        residual = 0.0;
        for s in 0..n {
            let v = (0..mdp.n_actions(s))
                .map(|i| mdp.backup(s, i, &values))
                .fold(f64::NEG_INFINITY, f64::max);
            residual = residual.max((v - values[s]).abs());
            next[s] = v;
        }
        std::mem::swap(&mut values, &mut next);
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: cap,
            residual,
        });
    }
    let choices: Vec<usize> = (0..n)
        .map(|s| greedy_lowest_id(mdp, s, &values, 2.0 * tol))
        .collect();
    let policy = TabularPolicy::deterministic(mdp, &choices)?;
    Ok((ValueFunction { values }, policy))
}

/// Index of the greedy action in `s`; among actions within `tie` of the best,
/// the one with the lowest action id wins.
pub(crate) fn greedy_lowest_id(mdp: &TabularMdp, s: usize, values: &[f64], tie: f64) -> usize {
    let q: Vec<f64> = (0..mdp.n_actions(s))
        .map(|i| mdp.backup(s, i, values))
        .collect();
    let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ids = mdp.actions(s);
    (0..q.len())
        .filter(|&i| q[i] >= best - tie)
        .min_by_key(|&i| ids[i])
        .unwrap_or(0)
}

/// Greedy policy that spreads mass uniformly over every action within `tie` of the best.
pub fn greedy_uniform_policy(
    mdp: &TabularMdp,
    values: &ValueFunction,
    tie: f64,
) -> Result<TabularPolicy> {
    if values.values.len() != mdp.n_states() {
        return Err(Error::DimensionMismatch {
            what: "value function",
            expected: mdp.n_states(),
            found: values.values.len(),
        });
    }
    let rows = (0..mdp.n_states())
        .map(|s| {
            let q: Vec<f64> = (0..mdp.n_actions(s))
                .map(|i| mdp.backup(s, i, &values.values))
                .collect();
            let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let count = q.iter().filter(|v| **v >= best - tie).count() as f64;
            q.iter()
                .map(|v| if *v >= best - tie { 1.0 / count } else { 0.0 })
                .collect()
        })
        .collect();
    TabularPolicy::new(mdp, rows)
}

/// `Q(s,a) = r(s,a) + γ Σ P(s'|s,a) V(s')` for every action index.
pub fn q_from_policy(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    values: &ValueFunction,
) -> Result<QFunction> {
    policy.check_against(mdp)?;
    if values.values.len() != mdp.n_states() {
        return Err(Error::DimensionMismatch {
            what: "value function",
            expected: mdp.n_states(),
            found: values.values.len(),
        });
    }
    let q = (0..mdp.n_states())
        .map(|s| {
            (0..mdp.n_actions(s))
                .map(|i| mdp.backup(s, i, &values.values))
                .collect()
        })
        .collect();
    Ok(QFunction { values: q })
}

/// Total variation distance `½ Σ |p_i − q_i|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            what: "distribution",
            expected: p.len(),
            found: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}
