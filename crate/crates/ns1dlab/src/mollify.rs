//! Periodic mollification of initial data.
//!
//! The kernel is the standard compactly supported bump
//! `phi(x) = C exp(-1/(1-x^2))` on (-1,1), scaled to width eta as
//! `phi_eta(x) = phi(x/eta)/eta` and renormalized after sampling on the
//! grid so the discrete weights are a convex combination (unit sum,
//! nonnegative). Convolution therefore preserves the field mean exactly
//! and never leaves the min/max envelope.
//!
//! Width recipe for conductivity kappa: eta = kappa^(1/4) for density and
//! temperature, eta = kappa^(1/2) for velocity.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Sampled, renormalized kernel of width `eta` on a given grid.
#[derive(Debug, Clone)]
pub struct MollifierKernel {
    pub eta: f64,
    /// weights[m] multiplies f[j - offset + m] where offset = (len-1)/2;
    /// weights sum to 1 exactly (renormalized).
    pub weights: Vec<f64>,
}

fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

impl MollifierKernel {
    pub fn new(grid: &Grid, eta: f64) -> Result<Self> {
        let dx = grid.dx();
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Config(format!("mollifier width must lie in (0,1], got {eta}")));
        }
        if eta < 2.0 * dx {
            return Err(Error::KernelUnderresolved { eta, two_dx: 2.0 * dx });
        }
        // Sample phi((m dx)/eta) for |m dx| < eta.
        let half = (eta / dx).ceil() as usize;
        let mut weights: Vec<f64> = (-(half as isize)..=half as isize)
            .map(|m| bump(m as f64 * dx / eta))
            .collect();
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::KernelUnderresolved { eta, two_dx: 2.0 * dx });
        }
        for w in &mut weights {
            *w /= sum;
        }
        Ok(MollifierKernel { eta, weights })
    }

    /// Periodic discrete convolution.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = f.len();
        let half = (self.weights.len() - 1) / 2;
        (0..n)
            .map(|j| {
                self.weights
                    .iter()
                    .enumerate()
                    .map(|(m, &w)| {
                        let idx = (j + n + n * half - half + m) % n;
                        w * f[idx]
                    })
                    .sum()
            })
            .collect()
    }
}

/// Convolve a periodic grid field with the width-`eta` bump kernel.
pub fn mollify(f: &[f64], grid: &Grid, eta: f64) -> Result<Vec<f64>> {
    Ok(MollifierKernel::new(grid, eta)?.apply(f))
}

/// Diagnostic norms of prepared data, reported by [`prepare_data`].
#[derive(Debug, Clone, Copy)]
pub struct PreparedDataReport {
    pub eta_rho_theta: f64,
    pub eta_u: f64,
    /// sqrt(kappa) * max |D rho0-hat|.
    pub sqrt_kappa_sup_dxrho: f64,
    /// sqrt(kappa) * max |D theta0-hat|.
    pub sqrt_kappa_sup_dxtheta: f64,
    /// sqrt(kappa) * max |D u0-hat|.
    pub sqrt_kappa_sup_dxu: f64,
}

/// Mollified initial data `(rho0-hat, u0-hat, theta0-hat)` with conductivity-
/// dependent widths, plus the sqrt(kappa)-weighted derivative sup-norms.
/// kappa = 0 returns the base data unchanged (with zero norms).
pub fn prepare_data(
    base: (&[f64], &[f64], &[f64]),
    grid: &Grid,
    kappa: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, PreparedDataReport)> {
    let (rho0, u0, theta0) = base;
    if kappa == 0.0 {
        let report = PreparedDataReport {
            eta_rho_theta: 0.0,
            eta_u: 0.0,
            sqrt_kappa_sup_dxrho: 0.0,
            sqrt_kappa_sup_dxtheta: 0.0,
            sqrt_kappa_sup_dxu: 0.0,
        };
        return Ok((rho0.to_vec(), u0.to_vec(), theta0.to_vec(), report));
    }
    if !(kappa > 0.0) {
        return Err(Error::Config(format!("conductivity must be >= 0, got {kappa}")));
    }
    let eta_rt = kappa.powf(0.25).min(1.0);
    let eta_u = kappa.sqrt().min(1.0);
    let rho_hat = mollify(rho0, grid, eta_rt)?;
    let theta_hat = mollify(theta0, grid, eta_rt)?;
    let u_hat = mollify(u0, grid, eta_u)?;
    let sup_abs = |f: &[f64]| f.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let report = PreparedDataReport {
        eta_rho_theta: eta_rt,
        eta_u,
        sqrt_kappa_sup_dxrho: kappa.sqrt() * sup_abs(&grid.deriv(&rho_hat)),
        sqrt_kappa_sup_dxtheta: kappa.sqrt() * sup_abs(&grid.deriv(&theta_hat)),
        sqrt_kappa_sup_dxu: kappa.sqrt() * sup_abs(&grid.deriv(&u_hat)),
    };
    Ok((rho_hat, u_hat, theta_hat, report))
}
