//! Small dense networks with exact reverse-mode gradients for both parameters
//! and inputs, Adam, and the ε-ball projection used by attack actors.
//!
//! Batches are rows: a forward pass maps a `batch × in` matrix to `batch × out`.

mod format;
mod mlp;
mod optim;
mod project;
mod recurrent;

pub use mlp::{Mlp, MlpCache};
pub use optim::{adam_step, hard_update, soft_update, AdamState};
pub use project::{project_ball, project_ball_backward, PROJECTION_LAMBDA};
pub use recurrent::{RecurrentCache, RecurrentCell, BPTT_WINDOW};

use crate::{Error, Result};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation's output `a`.
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Linear => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "linear" => Ok(Activation::Linear),
            _ => Err(Error::UnknownName {
                kind: "activation",
                name: s.to_string(),
            }),
        }
    }
}

/// Anything with a fixed, ordered list of parameter tensors.
pub trait Trainable {
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Gradients laid out like [`Trainable::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads(pub Vec<Vec<f64>>);

impl ParamGrads {
    pub fn zeros_like(net: &impl Trainable) -> Self {
        Self(net.params().iter().map(|p| vec![0.0; p.len()]).collect())
    }

    pub fn global_norm(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().flatten().for_each(|v| *v *= k);
    }

    pub fn add(&mut self, other: &ParamGrads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

/// Softmax of `logits / t`, stabilised by subtracting the maximum.
pub fn softmax_temp(logits: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "temperature must be > 0, got {t}"
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| ((z - max) / t).exp()).collect();
    let total: f64 = exp.iter().sum();
    Ok(exp.into_iter().map(|e| e / total).collect())
}

/// Vector-Jacobian product of [`softmax_temp`]: maps `∂L/∂p` to `∂L/∂logits`.
pub fn softmax_temp_backward(probs: &[f64], grad_probs: &[f64], t: f64) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(grad_probs).map(|(p, g)| p * g).sum();
    probs
        .iter()
        .zip(grad_probs)
        .map(|(p, g)| p * (g - dot) / t)
        .collect()
}

/// Cross-entropy `−log softmax(logits/t)[target]` and its gradient in the logits.
pub fn cross_entropy_onehot(logits: &[f64], target: usize, t: f64) -> Result<(f64, Vec<f64>)> {
    let p = softmax_temp(logits, t)?;
    let mut grad: Vec<f64> = p.iter().map(|v| v / t).collect();
    grad[target] -= 1.0 / t;
    // log-sum-exp form avoids log(0) for confident logits
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits
        .iter()
        .map(|z| ((z - max) / t).exp())
        .sum::<f64>()
        .ln();
    Ok((lse - (logits[target] - max) / t, grad))
}
