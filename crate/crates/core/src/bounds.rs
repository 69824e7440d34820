//! Policy smoothness and the attack-impact bounds it implies.
//!
//! For `α(s) = max_{s̄ ∈ A_s^ε} TV(π(·|s), π(·|s̄))`,
//! `‖V^π − V^{π∘χ}‖∞ ≤ 2‖α‖∞/(1−γ)·(R + γ‖V^π‖∞)`, and with an `L`-Lipschitz
//! policy (in TV) the same holds with `Lε` in place of `‖α‖∞`.

use crate::attack_mdp::{perturbed_policy, NeighborSet, StateMetric, TabularAttack};
use crate::envs::Norm;
use crate::mdp::{policy_evaluation, tv_distance, StateId, TabularMdp, TabularPolicy};
use crate::rng::{seeded, Rng};
use crate::{Error, Result};
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};

/// Tolerance used when evaluating policies for the bounds.
pub const EVAL_TOLERANCE: f64 = 1e-10;

/// Default number of ball samples per state for continuous policies.
pub const DEFAULT_SAMPLES: usize = 64;

/// Per-state smoothness `α_{π,ε}(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessProfile {
    pub epsilon: f64,
    pub alpha: Vec<f64>,
    /// Ball samples per state when α was estimated by sampling; such values
    /// are lower bounds on the true α.
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    /// Empirical Lipschitz estimate, when computed.
    pub lipschitz: Option<f64>,
    /// `d(s, χ(s))` for a given deterministic attack, when supplied.
    pub attack_distance: Option<Vec<f64>>,
}

impl SmoothnessProfile {
    /// `‖α‖∞`.
    pub fn sup(&self) -> f64 {
        self.alpha.iter().cloned().fold(0.0, f64::max)
    }

    pub fn is_lower_bound(&self) -> bool {
        self.samples.is_some()
    }

    /// Records `d(s, χ(s))` for every state.
    pub fn with_attack_distance(mut self, chi: &TabularAttack, metric: &dyn StateMetric) -> Self {
        self.attack_distance = Some(
            (0..chi.n_states())
                .map(|s| metric.distance(s, chi.get(s)))
                .collect(),
        );
        self
    }
}

/// `π(·|s)` spread over action ids, so states with different action sets compare.
fn dense_row(mdp: &TabularMdp, policy: &TabularPolicy, s: StateId, width: usize) -> Vec<f64> {
    let mut row = vec![0.0; width];
    for (i, p) in policy.probs(s).iter().enumerate() {
        row[mdp.actions(s)[i]] += p;
    }
    row
}

fn action_width(mdp: &TabularMdp) -> usize {
    (0..mdp.n_states())
        .flat_map(|s| mdp.actions(s).iter().copied())
        .max()
        .map_or(0, |m| m + 1)
}

/// Exact `α` by enumerating each state's neighbours.
pub fn alpha_tabular(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    neighbors: &NeighborSet,
) -> Result<SmoothnessProfile> {
    policy.check_against(mdp)?;
    if neighbors.n_states() != mdp.n_states() {
        return Err(Error::DimensionMismatch {
            what: "neighbour sets",
            expected: mdp.n_states(),
            found: neighbors.n_states(),
        });
    }
    let width = action_width(mdp);
    let rows: Vec<Vec<f64>> = (0..mdp.n_states())
        .map(|s| dense_row(mdp, policy, s, width))
        .collect();
    let alpha = (0..mdp.n_states())
        .map(|s| {
            neighbors
                .get(s)
                .iter()
                .map(|&c| tv_distance(&rows[s], &rows[c]))
                .try_fold(0.0, |m, d| d.map(|d| f64::max(m, d)))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SmoothnessProfile {
        epsilon: neighbors.epsilon(),
        alpha,
        samples: None,
        seed: None,
        lipschitz: None,
        attack_distance: None,
    })
}

/// Uniform point of the `norm`-ball of radius `epsilon` around `center`,
/// clamped to the unit box.
///
/// Directions come from the generalised Gaussian matching the norm (Laplace
/// for ℓ1, Gaussian for ℓ2) and radii from `ε·u^{1/d}`; ℓ∞ samples the cube.
pub fn sample_ball(center: &[f64], epsilon: f64, norm: Norm, rng: &mut Rng) -> Vec<f64> {
    let d = center.len();
    let offset: Vec<f64> = match norm {
        Norm::Linf => (0..d)
            .map(|_| {
                if epsilon > 0.0 {
                    rng.random_range(-epsilon..=epsilon)
                } else {
                    0.0
                }
            })
            .collect(),
        Norm::L1 | Norm::L2 => {
            let z: Vec<f64> = (0..d)
                .map(|_| match norm {
                    Norm::L1 => {
                        let e: f64 = Exp1.sample(rng);
                        if rng.random_bool(0.5) {
                            e
                        } else {
                            -e
                        }
                    }
                    _ => StandardNormal.sample(rng),
                })
                .collect();
            let n = norm.norm(&z);
            let u: f64 = rng.random();
            let r = epsilon * u.powf(1.0 / d as f64);
            if n == 0.0 {
                vec![0.0; d]
            } else {
                z.iter().map(|v| r * v / n).collect()
            }
        }
    };
    center
        .iter()
        .zip(&offset)
        .map(|(c, o)| (c + o).clamp(0.0, 1.0))
        .collect()
}

/// Sampled `α` for a policy on continuous observations: for each state the
/// largest TV over `samples` uniform points of its ε-ball. A lower bound.
pub fn alpha_sampled(
    probs: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    states: &[Vec<f64>],
    epsilon: f64,
    norm: Norm,
    samples: usize,
    seed: u64,
) -> Result<SmoothnessProfile> {
    let mut rng = seeded(seed);
    let mut alpha = Vec::with_capacity(states.len());
    for s in states {
        let p = probs(s)?;
        let mut best: f64 = 0.0;
        for _ in 0..samples {
            let q = probs(&sample_ball(s, epsilon, norm, &mut rng))?;
            best = best.max(tv_distance(&p, &q)?);
        }
        alpha.push(best);
    }
    Ok(SmoothnessProfile {
        epsilon,
        alpha,
        samples: Some(samples),
        seed: Some(seed),
        lipschitz: None,
        attack_distance: None,
    })
}

/// Empirical Lipschitz constant in TV: the largest
/// `TV(π(·|s), π(·|s'))/d(s, s')` over `pairs` random pairs from the unit box.
/// An estimate, not a certificate.
pub fn lipschitz_estimate(
    probs: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    dim: usize,
    norm: Norm,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = seeded(seed);
    let mut best: f64 = 0.0;
    for _ in 0..pairs {
        let a: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        let d = norm.distance(&a, &b);
        if d > 0.0 {
            best = best.max(tv_distance(&probs(&a)?, &probs(&b)?)? / d);
        }
    }
    Ok(best)
}

/// Exact Lipschitz constant of a tabular policy over all state pairs.
pub fn lipschitz_tabular(mdp: &TabularMdp, policy: &TabularPolicy, metric: &dyn StateMetric) -> Result<f64> {
    let width = action_width(mdp);
    let rows: Vec<Vec<f64>> = (0..mdp.n_states())
        .map(|s| dense_row(mdp, policy, s, width))
        .collect();
    let mut best: f64 = 0.0;
    for a in 0..rows.len() {
        for b in a + 1..rows.len() {
            let tv = tv_distance(&rows[a], &rows[b])?;
            let d = metric.distance(a, b);
            if tv > 0.0 {
                if d == 0.0 {
                    return Ok(f64::INFINITY);
                }
                best = best.max(tv / d);
            }
        }
    }
    Ok(best)
}

fn check_discount(gamma: f64) -> Result<()> {
    if !(gamma < 1.0) {
        return Err(Error::BoundUndefined(format!(
            "the bound needs γ < 1, got {gamma}"
        )));
    }
    Ok(())
}

/// `2‖α‖∞/(1−γ)·(R + γ‖V^π‖∞)`.
pub fn impact_bound(alpha_sup: f64, gamma: f64, reward_bound: f64, v_inf: f64) -> Result<f64> {
    check_discount(gamma)?;
    Ok(2.0 * alpha_sup / (1.0 - gamma) * (reward_bound + gamma * v_inf))
}

/// [`impact_bound`] for a tabular problem, with `R` the declared reward bound
/// and `‖V^π‖∞` from exact evaluation.
pub fn impact_bound_tabular(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    neighbors: &NeighborSet,
) -> Result<f64> {
    check_discount(mdp.gamma())?;
    let alpha = alpha_tabular(mdp, policy, neighbors)?;
    let v = policy_evaluation(mdp, policy, EVAL_TOLERANCE)?;
    impact_bound(alpha.sup(), mdp.gamma(), mdp.reward_bound(), v.inf_norm())
}

/// `2Lε/(1−γ)·(R + γ‖V^π‖∞)`.
pub fn lipschitz_bound(l: f64, epsilon: f64, reward_bound: f64, v_inf: f64, gamma: f64) -> Result<f64> {
    if !(l >= 0.0) {
        return Err(Error::InvalidConfig(format!("Lipschitz constant must be ≥ 0, got {l}")));
    }
    check_discount(gamma)?;
    Ok(2.0 * l * epsilon / (1.0 - gamma) * (reward_bound + gamma * v_inf))
}

/// The Lipschitz bound with `sup_s d(s, χ(s))` in place of `ε`; never larger
/// than [`lipschitz_bound`] for a feasible attack.
pub fn lipschitz_bound_attack_distance(
    l: f64,
    attack_distance: &[f64],
    reward_bound: f64,
    v_inf: f64,
    gamma: f64,
) -> Result<f64> {
    let sup = attack_distance.iter().cloned().fold(0.0, f64::max);
    lipschitz_bound(l, sup, reward_bound, v_inf, gamma)
}

/// `‖V^π − V^{π∘χ}‖∞` by exact evaluation of both policies.
pub fn empirical_gap(mdp: &TabularMdp, policy: &TabularPolicy, chi: &TabularAttack) -> Result<f64> {
    let clean = policy_evaluation(mdp, policy, EVAL_TOLERANCE)?;
    let attacked = policy_evaluation(mdp, &perturbed_policy(mdp, policy, chi)?, EVAL_TOLERANCE)?;
    Ok(clean
        .values
        .iter()
        .zip(&attacked.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Both sides of `|E_{f1}[X] − E_{f2}[X]| ≤ 2·X∞·TV(f1, f2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn tv_expectation_check(x: &[f64], f1: &[f64], f2: &[f64]) -> Result<TvCheck> {
    if f1.len() != x.len() || f2.len() != x.len() {
        return Err(Error::DimensionMismatch {
            what: "distribution",
            expected: x.len(),
            found: if f1.len() != x.len() { f1.len() } else { f2.len() },
        });
    }
    let e1: f64 = x.iter().zip(f1).map(|(a, b)| a * b).sum();
    let e2: f64 = x.iter().zip(f2).map(|(a, b)| a * b).sum();
    let x_inf = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let lhs = (e1 - e2).abs();
    let rhs = 2.0 * x_inf * tv_distance(f1, f2)?;
    Ok(TvCheck {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-12) + 1e-12,
    })
}
