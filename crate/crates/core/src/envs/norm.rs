use crate::{Error, Result};
use std::fmt;
use std::str::FromStr;

/// Distance used for perturbation budgets, measured in normalized observation space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Norm {
    L1,
    #[default]
    L2,
    Linf,
}

impl Norm {
    pub fn norm(self, x: &[f64]) -> f64 {
        match self {
            Norm::L1 => x.iter().map(|v| v.abs()).sum(),
            Norm::L2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Norm::Linf => x.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.norm(&diff)
    }

    /// A (sub)gradient of `‖x‖` at `x`; zero at the origin.
    pub fn norm_gradient(self, x: &[f64]) -> Vec<f64> {
        let n = self.norm(x);
        if n == 0.0 {
            return vec![0.0; x.len()];
        }
        match self {
            Norm::L1 => x.iter().map(|v| sign(*v)).collect(),
            Norm::L2 => x.iter().map(|v| v / n).collect(),
            Norm::Linf => {
                let k =
                    x.iter().enumerate().fold(
                        0,
                        |best, (i, v)| if v.abs() > x[best].abs() { i } else { best },
                    );
                let mut g = vec![0.0; x.len()];
                g[k] = sign(x[k]);
                g
            }
        }
    }

    /// Steepest unit step for this norm: `g/‖g‖₂` for ℓ2, `sign(g)` for ℓ∞,
    /// a signed coordinate vector on the largest component for ℓ1.
    pub fn unit_direction(self, g: &[f64]) -> Vec<f64> {
        match self {
            Norm::L2 => {
                let n = Norm::L2.norm(g);
                if n == 0.0 {
                    vec![0.0; g.len()]
                } else {
                    g.iter().map(|v| v / n).collect()
                }
            }
            Norm::Linf => g.iter().map(|v| sign(*v)).collect(),
            Norm::L1 => Norm::Linf.norm_gradient(g),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
            Norm::Linf => "linf",
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            "linf" | "l_inf" | "inf" => Ok(Norm::Linf),
            _ => Err(Error::UnknownName {
                kind: "norm",
                name: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms() {
        let x = [3.0, -4.0];
        assert_eq!(Norm::L1.norm(&x), 7.0);
        assert_eq!(Norm::L2.norm(&x), 5.0);
        assert_eq!(Norm::Linf.norm(&x), 4.0);
        assert_eq!(Norm::Linf.unit_direction(&x), vec![1.0, -1.0]);
        assert_eq!("LINF".parse::<Norm>().unwrap(), Norm::Linf);
        assert!("l3".parse::<Norm>().is_err());
    }
}
