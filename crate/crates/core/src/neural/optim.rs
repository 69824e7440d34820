use super::{ParamGrads, Trainable};
use crate::{Error, Result};

/// Adam with bias correction and optional global-norm gradient clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the whole gradient to this global ℓ2 norm when it is exceeded.
    pub clip: Option<f64>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(net: &impl Trainable, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: None,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn with_clip(mut self, clip: Option<f64>) -> Self {
        self.clip = clip;
        self
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One Adam update of `net` along `grads` (a descent step).
pub fn adam_step(
    net: &mut impl Trainable,
    grads: &ParamGrads,
    state: &mut AdamState,
) -> Result<()> {
    let mut params = net.params_mut();
    let shapes_match = params.len() == grads.0.len()
        && params.len() == state.m.len()
        && params
            .iter()
            .zip(&grads.0)
            .zip(&state.m)
            .all(|((p, g), m)| p.len() == g.len() && p.len() == m.len());
    if !shapes_match {
        return Err(Error::DimensionMismatch {
            what: "parameter gradients",
            expected: params.iter().map(|p| p.len()).sum(),
            found: grads.0.iter().map(|g| g.len()).sum(),
        });
    }
    let scale = match state.clip {
        Some(c) => {
            let norm = grads.global_norm();
            if norm > c {
                c / norm
            } else {
                1.0
            }
        }
        None => 1.0,
    };
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let step = state.lr * c2.sqrt() / c1;
    // eps is applied to the bias-corrected second moment
    let eps = state.eps * c2.sqrt();
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(&grads.0)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for i in 0..p.len() {
            let gi = g[i] * scale;
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            p[i] -= step * m[i] / (v[i].sqrt() + eps);
        }
    }
    Ok(())
}

/// Polyak averaging `target ← τ·source + (1−τ)·target`.
pub fn soft_update<T: Trainable>(target: &mut T, source: &T, tau: f64) {
    for (t, s) in target.params_mut().into_iter().zip(source.params()) {
        t.iter_mut()
            .zip(s)
            .for_each(|(a, b)| *a = tau * b + (1.0 - tau) * *a);
    }
}

/// Copies every parameter of `source` into `target`.
pub fn hard_update<T: Trainable>(target: &mut T, source: &T) {
    for (t, s) in target.params_mut().into_iter().zip(source.params()) {
        t.copy_from_slice(s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scalar(Vec<f64>);

    impl Trainable for Scalar {
        fn params(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn params_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut x = Scalar(vec![1.0]);
        let mut state = AdamState::new(&x, 0.1);
        adam_step(&mut x, &ParamGrads(vec![vec![1.0]]), &mut state).unwrap();
        // m̂ = 1, v̂ = 1, so Δ = −0.1·1/(1+1e-8)
        assert!((x.0[0] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut x = Scalar(vec![0.3, -0.7]);
        let mut state = AdamState::new(&x, 0.1);
        for _ in 0..5 {
            adam_step(&mut x, &ParamGrads(vec![vec![0.0, 0.0]]), &mut state).unwrap();
        }
        assert_eq!(x.0, vec![0.3, -0.7]);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut x = Scalar(vec![0.0, 0.0]);
        let mut state = AdamState::new(&x, 0.01);
        for _ in 0..100 {
            adam_step(&mut x, &ParamGrads(vec![vec![2.0, -3.0]]), &mut state).unwrap();
        }
        assert!(x.0[0] < -0.5 && x.0[1] > 0.5);
    }

    #[test]
    fn clipping_bounds_the_effective_gradient() {
        let mut x = Scalar(vec![0.0]);
        let mut clipped = AdamState::new(&x, 0.1).with_clip(Some(1.0));
        adam_step(&mut x, &ParamGrads(vec![vec![1e6]]), &mut clipped).unwrap();
        assert!((x.0[0] + 0.1).abs() < 1e-8);
        assert!(adam_step(&mut x, &ParamGrads(vec![vec![1.0, 2.0]]), &mut clipped).is_err());
    }

    #[test]
    fn target_updates() {
        let mut target = Scalar(vec![0.0, 10.0]);
        let source = Scalar(vec![1.0, 0.0]);
        soft_update(&mut target, &source, 0.25);
        assert_eq!(target.0, vec![0.25, 7.5]);
        hard_update(&mut target, &source);
        assert_eq!(target.0, source.0);
    }
}
