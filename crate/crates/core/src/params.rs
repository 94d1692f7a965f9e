use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Direction of the exponent perturbation around the critical power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criticality {
    Subcritical,
    Supercritical,
}

impl Criticality {
    /// `+1` above the critical exponent, `-1` below it.
    pub fn sign(self) -> f64 {
        match self {
            Criticality::Subcritical => -1.0,
            Criticality::Supercritical => 1.0,
        }
    }
}

impl std::str::FromStr for Criticality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subcritical" | "sub" | "-" => Ok(Criticality::Subcritical),
            "supercritical" | "super" | "+" => Ok(Criticality::Supercritical),
            other => Err(Error::Config(format!("unknown criticality '{other}'"))),
        }
    }
}

/// Dimension, fractional order and exponent perturbation of the problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracParams {
    pub n: usize,
    pub s: f64,
    pub sign: Criticality,
    pub eps: f64,
}

impl FracParams {
    pub fn new(n: usize, s: f64, sign: Criticality, eps: f64) -> Result<Self> {
        let p = FracParams { n, s, sign, eps };
        p.validate()?;
        Ok(p)
    }

    /// Unperturbed problem (`eps = 0`).
    pub fn critical(n: usize, s: f64) -> Result<Self> {
        Self::new(n, s, Criticality::Subcritical, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("dimension n must be positive".into()));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::Config(format!(
                "order s = {} must lie in (0, 1)",
                self.s
            )));
        }
        if !(self.n as f64 > 2.0 * self.s) {
            return Err(Error::Config(format!(
                "need n > 2s, got n = {} and s = {}",
                self.n, self.s
            )));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::Config(format!(
                "perturbation eps = {} must be finite and nonnegative",
                self.eps
            )));
        }
        if self.exponent() <= 1.0 {
            return Err(Error::Config(format!(
                "perturbed exponent {} must exceed 1",
                self.exponent()
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> f64 {
        self.n as f64
    }

    /// `n - 2s`, the decay exponent of the fundamental solution.
    pub fn decay(&self) -> f64 {
        self.dim() - 2.0 * self.s
    }

    /// Critical exponent `(n + 2s) / (n - 2s)`.
    pub fn critical_exponent(&self) -> f64 {
        (self.dim() + 2.0 * self.s) / self.decay()
    }

    /// `p* ± eps`.
    pub fn exponent(&self) -> f64 {
        self.critical_exponent() + self.sign.sign() * self.eps
    }

    /// Length scale of the blow-up: `eps^{1/(n-2s)}`. Points of the original
    /// domain map to the enlarged one by dividing by this factor.
    pub fn dilation(&self) -> f64 {
        self.eps.powf(1.0 / self.decay())
    }

    /// Amplitude factor `kappa` with `v(y) = kappa * u(dilation * y)`.
    pub fn amplitude(&self) -> f64 {
        let mu = self.dilation();
        mu.powf(2.0 * self.s / (self.exponent() - 1.0))
    }

    /// Power of `eps` carried by the amplitude factor.
    pub fn amplitude_exponent(&self) -> f64 {
        2.0 * self.s / (self.decay() * (self.exponent() - 1.0))
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.n, self.s, self.sign, eps)
    }
}

/// Surface area of the unit sphere in `R^n`.
pub fn sphere_area(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / statrs::function::gamma::gamma(h)
}

/// Normalization of the hypersingular integral form of `(-Delta)^s`.
pub fn hypersingular_constant(n: usize, s: f64) -> f64 {
    use statrs::function::gamma::gamma;
    let h = n as f64 / 2.0;
    4f64.powf(s) * gamma(h + s) / (std::f64::consts::PI.powf(h) * gamma(-s).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_exponent_is_four() {
        let p = FracParams::critical(1, 0.3).unwrap();
        assert!((p.critical_exponent() - 4.0).abs() < 1e-15);
        assert!((p.decay() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rejects_order_out_of_range() {
        let err = FracParams::critical(1, 1.5).unwrap_err();
        assert!(err.to_string().contains("(0, 1)"), "{err}");
        assert!(FracParams::critical(1, 0.5).is_err());
        assert!(FracParams::critical(0, 0.3).is_err());
    }

    #[test]
    fn subcritical_exponent_must_exceed_one() {
        assert!(FracParams::new(1, 0.3, Criticality::Subcritical, 3.5).is_err());
        assert!(FracParams::new(1, 0.3, Criticality::Subcritical, 0.5).is_ok());
    }

    #[test]
    fn amplitude_exponent_is_one_half_at_critical() {
        let p = FracParams::new(1, 0.3, Criticality::Subcritical, 0.0).unwrap();
        assert!((p.amplitude_exponent() - 0.5).abs() < 1e-14);
        let p2 = FracParams::new(2, 0.7, Criticality::Supercritical, 0.0).unwrap();
        assert!((p2.amplitude_exponent() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * std::f64::consts::PI).abs() < 1e-13);
        assert!((sphere_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-13);
    }

    #[test]
    fn half_order_constant_in_one_dimension() {
        let c = hypersingular_constant(1, 0.5);
        assert!((c - 1.0 / std::f64::consts::PI).abs() < 1e-13);
    }
}
