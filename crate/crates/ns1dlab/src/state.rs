//! Lagrangian state on the periodic label grid and pointwise thermodynamic
//! closures.
//!
//! Fields live at cell centers of the label coordinate. `rho0` is the
//! reference density frozen at t = 0; the particle positions `x_pos` carry
//! the flow map (kept unwrapped, so the periodic extension satisfies
//! X(x + 1) = X(x) + 1).

use crate::error::{Error, Result};
use crate::gas::GasParams;
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq)]
pub struct LagState {
    pub t: f64,
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
    pub x_pos: Vec<f64>,
    pub rho0: Vec<f64>,
}

impl LagState {
    /// Initial state at t = 0: particles sit at the cell centers and the
    /// reference density equals the initial density.
    pub fn initial(grid: &Grid, rho0: Vec<f64>, u0: Vec<f64>, theta0: Vec<f64>) -> Result<Self> {
        let state = LagState {
            t: 0.0,
            rho: rho0.clone(),
            u: u0,
            theta: theta0,
            x_pos: grid.cell_centers(),
            rho0,
        };
        state.validate(grid)?;
        Ok(state)
    }

    /// Fail-fast positivity and shape check.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let n = grid.n();
        for (name, f) in [
            ("rho", &self.rho),
            ("u", &self.u),
            ("theta", &self.theta),
            ("x_pos", &self.x_pos),
            ("rho0", &self.rho0),
        ] {
            if f.len() != n {
                return Err(Error::Config(format!(
                    "field {name} has {} entries, grid has {n}",
                    f.len()
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::Positivity {
                    context: format!("non-finite value in {name} at t = {:.6e}", self.t),
                    min_value: f64::NAN,
                });
            }
        }
        for (name, f) in [("rho", &self.rho), ("theta", &self.theta), ("rho0", &self.rho0)] {
            let min = f.iter().cloned().fold(f64::INFINITY, f64::min);
            if !(min > 0.0) {
                return Err(Error::Positivity {
                    context: format!("{name} at t = {:.6e}", self.t),
                    min_value: min,
                });
            }
        }
        Ok(())
    }

    pub fn min_max(f: &[f64]) -> (f64, f64) {
        f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }
}

/// Pointwise thermodynamic quantities derived from a state.
#[derive(Debug, Clone)]
pub struct DerivedFields {
    /// Pressure p = R rho theta.
    pub p: Vec<f64>,
    /// Internal energy e = cv theta.
    pub e: Vec<f64>,
    /// Total specific energy u^2/2 + e.
    pub etot: Vec<f64>,
    /// Entropy s = cv ln theta - R ln rho.
    pub s: Vec<f64>,
    /// Stress sigma = mu (rho/rho0) D(u) - R rho theta (label form).
    pub sigma: Vec<f64>,
}

/// Evaluate all derived fields. The stress uses the centered label
/// derivative of u, so `sigma + p = mu (rho/rho0) D(u)` holds identically.
pub fn thermo(state: &LagState, params: &GasParams, grid: &Grid) -> Result<DerivedFields> {
    state.validate(grid)?;
    let n = grid.n();
    let du = grid.deriv(&state.u);
    let mut p = Vec::with_capacity(n);
    let mut e = Vec::with_capacity(n);
    let mut etot = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for j in 0..n {
        let rho = state.rho[j];
        let th = state.theta[j];
        let pj = params.r * rho * th;
        p.push(pj);
        e.push(params.cv * th);
        etot.push(0.5 * state.u[j] * state.u[j] + params.cv * th);
        s.push(params.cv * th.ln() - params.r * rho.ln());
        sigma.push(params.mu * (rho / state.rho0[j]) * du[j] - pj);
    }
    Ok(DerivedFields { p, e, etot, s, sigma })
}
