//! Cyclic (periodic) tridiagonal linear solver.
//!
//! Thomas elimination on the condensed system plus a Sherman–Morrison
//! correction for the two periodic corner entries. All the systems produced
//! by the implicit diffusion steps are strictly diagonally dominant, so no
//! pivoting is needed; a vanishing pivot is reported as a solve failure.

use crate::error::{Error, Result};

/// Solve the n x n cyclic tridiagonal system with diagonal `b`, subdiagonal
/// `a` (a[j] couples row j to j-1; a[0] is the corner coupling row 0 to
/// n-1) and superdiagonal `c` (c[j] couples row j to j+1; c[n-1] is the
/// corner coupling row n-1 to 0).
pub fn solve_cyclic(a: &[f64], b: &[f64], c: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    assert!(a.len() == n && c.len() == n && rhs.len() == n);
    assert!(n >= 3, "cyclic tridiagonal solve needs n >= 3");

    // Condensed diagonal per Sherman-Morrison: B = A - u v^T with
    // u = (gamma, 0, ..., 0, c[n-1])^T and v = (1, 0, ..., 0, a[0]/gamma)^T.
    let gamma = -b[0];
    let mut bb = b.to_vec();
    bb[0] = b[0] - gamma;
    bb[n - 1] = b[n - 1] - a[0] * c[n - 1] / gamma;

    let x = thomas(a, &bb, c, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = c[n - 1];
    let z = thomas(a, &bb, c, &u)?;

    let denom = 1.0 + z[0] + a[0] * z[n - 1] / gamma;
    if denom.abs() < 1e-300 {
        return Err(Error::LinearSolve("singular cyclic correction".into()));
    }
    let factor = (x[0] + a[0] * x[n - 1] / gamma) / denom;
    Ok(x.iter().zip(&z).map(|(&xi, &zi)| xi - factor * zi).collect())
}

/// Plain Thomas algorithm for the non-cyclic tridiagonal system (corner
/// entries of `a`/`c` ignored at the boundary rows).
fn thomas(a: &[f64], b: &[f64], c: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut pivot = b[0];
    if pivot.abs() < 1e-300 {
        return Err(Error::LinearSolve("zero pivot in row 0".into()));
    }
    cp[0] = c[0] / pivot;
    dp[0] = rhs[0] / pivot;
    for j in 1..n {
        pivot = b[j] - a[j] * cp[j - 1];
        if pivot.abs() < 1e-300 {
            return Err(Error::LinearSolve(format!("zero pivot in row {j}")));
        }
        cp[j] = c[j] / pivot;
        dp[j] = (rhs[j] - a[j] * dp[j - 1]) / pivot;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for j in (0..n - 1).rev() {
        x[j] = dp[j] - cp[j] * x[j + 1];
    }
    Ok(x)
}
