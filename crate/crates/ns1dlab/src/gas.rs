//! Physical constants of the gas: viscosity, gas constant, specific heat,
//! conductivity. The adiabatic exponent is always derived, never stored.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasParams {
    pub mu: f64,
    pub r: f64,
    pub cv: f64,
    pub kappa: f64,
}

impl GasParams {
    pub fn new(mu: f64, r: f64, cv: f64, kappa: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::Validation(format!("viscosity must satisfy mu > 0, got {mu}")));
        }
        if !(r > 0.0) {
            return Err(Error::Validation(format!("gas constant must satisfy R > 0, got {r}")));
        }
        if !(cv > 0.0) {
            return Err(Error::Validation(format!("specific heat must satisfy cv > 0, got {cv}")));
        }
        if !(kappa >= 0.0) {
            return Err(Error::Validation(format!("conductivity must satisfy kappa >= 0, got {kappa}")));
        }
        Ok(GasParams { mu, r, cv, kappa })
    }

    /// Adiabatic exponent gamma = R/cv + 1 > 1 (always derived from R and
    /// cv, never stored separately).
    pub fn gamma(&self) -> f64 {
        self.r / self.cv + 1.0
    }

    /// Same parameters with a different conductivity (sweep helper).
    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        GasParams::new(self.mu, self.r, self.cv, kappa)
    }
}
