use crate::envs::Norm;

/// Default regulariser added to `‖x‖` in the projection.
pub const PROJECTION_LAMBDA: f64 = 1e-6;

/// Radial projection onto the `ε`-ball: `min(1, ε/(‖x‖+λ))·x`.
pub fn project_ball(x: &[f64], epsilon: f64, lambda: f64, norm: Norm) -> Vec<f64> {
    let c = scale(x, epsilon, lambda, norm);
    x.iter().map(|v| c * v).collect()
}

fn scale(x: &[f64], epsilon: f64, lambda: f64, norm: Norm) -> f64 {
    let denom = norm.norm(x) + lambda;
    if denom == 0.0 || epsilon >= denom {
        1.0
    } else {
        epsilon / denom
    }
}

/// Vector-Jacobian product of [`project_ball`].
///
/// Inside the ball the map is the identity. Outside it is `x ↦ ε·x/(‖x‖+λ)`,
/// with Jacobian `cI − ε/(‖x‖+λ)²·x·∇‖x‖ᵀ`, `c = ε/(‖x‖+λ)`.
pub fn project_ball_backward(
    x: &[f64],
    epsilon: f64,
    lambda: f64,
    norm: Norm,
    output_grad: &[f64],
) -> Vec<f64> {
    let n = norm.norm(x);
    let denom = n + lambda;
    if denom == 0.0 || epsilon >= denom {
        return output_grad.to_vec();
    }
    let c = epsilon / denom;
    let k = epsilon / (denom * denom);
    let x_dot_g: f64 = x.iter().zip(output_grad).map(|(a, b)| a * b).sum();
    let grad_norm = norm.norm_gradient(x);
    output_grad
        .iter()
        .zip(&grad_norm)
        .map(|(g, d)| c * g - k * x_dot_g * d)
        .collect()
}
