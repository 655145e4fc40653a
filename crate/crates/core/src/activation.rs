//! Pointwise activations and their declared regularity constants.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use libm::erf;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Erf,
    Relu,
}

/// Sup-norms and Lipschitz constants of `Φ` and `Φ'`.
///
/// `None` marks a constant that does not exist (ReLU is unbounded and `Φ'`
/// is discontinuous).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationNorms {
    pub sup_phi: Option<f64>,
    pub sup_dphi: Option<f64>,
    pub lip_phi: Option<f64>,
    pub lip_dphi: Option<f64>,
}

impl ActivationNorms {
    /// True when every constant is finite, i.e. `Φ` and `Φ'` are bounded and Lipschitz.
    pub fn bounded_lipschitz(&self) -> bool {
        self.sup_phi.is_some()
            && self.sup_dphi.is_some()
            && self.lip_phi.is_some()
            && self.lip_dphi.is_some()
    }
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Erf,
        Activation::Relu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Erf => "erf",
            Activation::Relu => "relu",
        }
    }

    #[inline]
    pub fn phi(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Erf => erf(z),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative; ReLU uses `Φ'(0) = 0`.
    #[inline]
    pub fn dphi(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let c = z.cosh();
                1.0 / (c * c)
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Erf => 2.0 / PI.sqrt() * (-z * z).exp(),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `(Φ(z), Φ'(z))`, bitwise equal to calling [`Self::phi`] and [`Self::dphi`]
    /// but sharing work where the two agree on it.
    #[inline]
    pub fn phi_dphi(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(z);
                (s, s * (1.0 - s))
            }
            _ => (self.phi(z), self.dphi(z)),
        }
    }

    pub fn norms(self) -> ActivationNorms {
        match self {
            Activation::Tanh => ActivationNorms {
                sup_phi: Some(1.0),
                sup_dphi: Some(1.0),
                lip_phi: Some(1.0),
                // max |2 tanh z sech^2 z| = 4 / (3 sqrt 3)
                lip_dphi: Some(4.0 / (3.0 * 3f64.sqrt())),
            },
            Activation::Sigmoid => ActivationNorms {
                sup_phi: Some(1.0),
                sup_dphi: Some(0.25),
                lip_phi: Some(0.25),
                // max |s(1-s)(1-2s)| = 1 / (6 sqrt 3)
                lip_dphi: Some(1.0 / (6.0 * 3f64.sqrt())),
            },
            Activation::Erf => ActivationNorms {
                sup_phi: Some(1.0),
                sup_dphi: Some(2.0 / PI.sqrt()),
                lip_phi: Some(2.0 / PI.sqrt()),
                // max |4z e^{-z^2} / sqrt(pi)| at z = 1/sqrt 2
                lip_dphi: Some(2.0 * (2.0 / PI).sqrt() * (-0.5f64).exp()),
            },
            Activation::Relu => ActivationNorms {
                sup_phi: None,
                sup_dphi: Some(1.0),
                lip_phi: Some(1.0),
                lip_dphi: None,
            },
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" | "logistic" => Ok(Activation::Sigmoid),
            "erf" => Ok(Activation::Erf),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidArgument(format!("unknown activation `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-5;
        for act in Activation::ALL {
            for k in 0..=1200 {
                let z = -6.0 + k as f64 * 0.01;
                if act == Activation::Relu && z.abs() < 2.0 * h {
                    continue;
                }
                let fd = (act.phi(z + h) - act.phi(z - h)) / (2.0 * h);
                assert!((act.dphi(z) - fd).abs() < 1e-6, "{act} at {z}");
            }
        }
    }

    #[test]
    fn fused_pair_is_bitwise_equal() {
        for act in Activation::ALL {
            for k in 0..=400 {
                let z = -40.0 + k as f64 * 0.2;
                assert_eq!(act.phi_dphi(z), (act.phi(z), act.dphi(z)), "{act} at {z}");
            }
        }
    }

    #[test]
    fn relu_derivative_at_zero() {
        assert_eq!(Activation::Relu.dphi(0.0), 0.0);
    }

    #[test]
    fn parses_names() {
        for act in Activation::ALL {
            assert_eq!(act.name().parse::<Activation>().unwrap(), act);
        }
        assert!("swish".parse::<Activation>().is_err());
    }

    #[test]
    fn sigmoid_stable_in_tails() {
        assert_eq!(Activation::Sigmoid.phi(-800.0), 0.0);
        assert_eq!(Activation::Sigmoid.phi(800.0), 1.0);
        assert!(Activation::Sigmoid.dphi(800.0).is_finite());
    }
}
