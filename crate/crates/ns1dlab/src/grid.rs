//! Periodic grid on the unit torus and the exact discrete spatial operators.
//!
//! Two derivative flavors coexist and are never mixed inside one identity:
//!
//! * `deriv` — second-order centered difference, used by the solver and by
//!   every residual diagnostic;
//! * `deriv_forward` / `antideriv` — a matched forward-difference /
//!   cumulative-sum pair for which the discrete round trip
//!   `antideriv(deriv_forward(f)) = f - mean(f)` holds exactly (up to
//!   floating-point roundoff), realizing the right-inverse-of-d/dx property.

use crate::error::{Error, Result};

/// Uniform periodic grid of `n` cells on [0,1), label spacing `dx = 1/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    dx: f64,
}

impl Grid {
    /// `n` must be at least 8 (coarser grids cannot carry the diagnostics).
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::Config(format!("grid needs n >= 8 cells, got {n}")));
        }
        Ok(Grid { n, dx: 1.0 / n as f64 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Cell centers x_j = (j + 1/2)/n.
    pub fn cell_centers(&self) -> Vec<f64> {
        (0..self.n).map(|j| (j as f64 + 0.5) * self.dx).collect()
    }

    /// Centered second-order difference with periodic wraparound.
    pub fn deriv(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(f.len(), n, "field length must match grid");
        let half_inv_dx = 0.5 / self.dx;
        (0..n)
            .map(|j| (f[(j + 1) % n] - f[(j + n - 1) % n]) * half_inv_dx)
            .collect()
    }

    /// Forward difference (f[j+1] - f[j])/dx, the partner of `antideriv`.
    pub fn deriv_forward(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(f.len(), n, "field length must match grid");
        let inv_dx = 1.0 / self.dx;
        (0..n).map(|j| (f[(j + 1) % n] - f[j]) * inv_dx).collect()
    }

    /// Discrete antiderivative: cumulative sum of (f - mean(f))·dx, then
    /// mean-adjusted. With `deriv_forward` it satisfies exactly (in exact
    /// arithmetic, machine precision in floating point):
    ///
    /// * `deriv_forward(antideriv(f)) = f - mean(f)`
    /// * `antideriv(deriv_forward(f)) = f - mean(f)`
    pub fn antideriv(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(f.len(), n, "field length must match grid");
        let mean = self.mean(f);
        let mut g = vec![0.0; n];
        let mut acc = 0.0;
        for j in 1..n {
            acc += (f[j - 1] - mean) * self.dx;
            g[j] = acc;
        }
        let g_mean = self.mean(&g);
        for v in &mut g {
            *v -= g_mean;
        }
        g
    }

    /// Quadrature Σ f_j dx on the torus.
    pub fn integral(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.dx
    }

    /// Quadrature Σ f_j w_j dx with a per-cell weight.
    pub fn weighted_integral(&self, f: &[f64], w: &[f64]) -> f64 {
        f.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() * self.dx
    }

    pub fn mean(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() / self.n as f64
    }
}

/// x - 1 - ln x: the nonnegative convex entropy distance to 1, vanishing
/// exactly at x = 1.
pub fn entropy_h(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("entropy_h needs x > 0, got {x}")));
    }
    Ok(x - 1.0 - x.ln())
}
