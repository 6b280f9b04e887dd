//! Time integration of the Lagrangian-form system on the periodic label
//! grid:
//!
//! ```text
//! rho0 d/dt rho   = -rho^2 D(u)
//! rho0 d/dt u     =  d/dx sigma,            sigma = mu (rho/rho0) du/dx - R rho theta
//! rho0 cv d/dt th =  sigma du/dx + d/dx( kappa (rho/rho0) d/dx theta )
//! d/dt X          =  u
//! ```
//!
//! IMEX splitting: the two diffusive fluxes (viscous momentum flux,
//! conduction flux) are implicit via one cyclic tridiagonal solve per field
//! per (sub)step, with coefficients frozen at the substep start; density
//! update, pressure gradient, pressure work, and particle transport are
//! explicit.
//!
//! The spatial forms are chosen to be *compatible*: the momentum equation
//! uses face fluxes, and the matching heating terms are assembled from the
//! same face quantities. Consequently the semi-discrete system conserves
//! mass and momentum exactly and total energy exactly (for the
//! Crank-Nicolson implicit substep the viscous kinetic-energy loss is
//! deposited into temperature face-by-face), so the observed energy drift
//! is purely a time-discretization effect and vanishes at the scheme's
//! order. All velocity dependence enters through differences of u, making
//! Galilean boosts exact.

use crate::error::{Error, Result};
use crate::gas::GasParams;
use crate::grid::Grid;
use crate::state::LagState;
use crate::tridiag::solve_cyclic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeOrder {
    /// IMEX Euler: explicit Euler on the nonstiff terms, backward Euler on
    /// the diffusive fluxes.
    First,
    /// Strang-split IMEX midpoint: half-step Crank-Nicolson diffusion,
    /// explicit midpoint on the nonstiff terms, half-step Crank-Nicolson.
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtPolicy {
    /// dt capped by the acoustic label-speed CFL condition and by an
    /// explicit-work stability bound (both boost-invariant).
    Adaptive,
    /// dt taken from `dt_initial` verbatim (sweeps use this so snapshot
    /// times coincide across runs).
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt_initial: f64,
    pub t_end: f64,
    pub cfl_safety: f64,
    /// Snapshot cadence in accepted steps; t = 0 and t = t_end always kept.
    pub snapshot_every: usize,
    pub scheme_order: SchemeOrder,
    pub dt_policy: DtPolicy,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_initial > 0.0) {
            return Err(Error::Config(format!("dt_initial must be > 0, got {}", self.dt_initial)));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::Config(format!("t_end must be > 0, got {}", self.t_end)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Config(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if self.snapshot_every == 0 {
            return Err(Error::Config("snapshot_every must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Grid,
    pub params: GasParams,
    pub config: SolverConfig,
    pub snapshots: Vec<LagState>,
    pub dt_history: Vec<f64>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }
}

/// Face-averaged transport coefficient: face j sits between cells j and
/// j+1, value = coeff * avg(rho/rho0).
fn face_coeff(coeff: f64, rho: &[f64], rho0: &[f64]) -> Vec<f64> {
    let n = rho.len();
    (0..n)
        .map(|j| {
            let jp = (j + 1) % n;
            coeff * 0.5 * (rho[j] / rho0[j] + rho[jp] / rho0[jp])
        })
        .collect()
}

/// Conservative flux Laplacian: (a_{j+1/2}(f_{j+1}-f_j) - a_{j-1/2}(f_j-f_{j-1}))/dx^2.
fn flux_laplacian(aface: &[f64], f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let inv_dx2 = 1.0 / (dx * dx);
    (0..n)
        .map(|j| {
            let jp = (j + 1) % n;
            let jm = (j + n - 1) % n;
            (aface[j] * (f[jp] - f[j]) - aface[jm] * (f[j] - f[jm])) * inv_dx2
        })
        .collect()
}

/// Implicit diffusion substep: solve (m/h) x - theta_w L x = (m/h) f + (1-theta_w) L f,
/// where theta_w = 1 gives backward Euler and theta_w = 1/2 Crank-Nicolson.
/// Skipped entirely (bit-identical return) when the flux vanishes
/// identically — this keeps constant states exact.
fn implicit_diffusion(
    f: &[f64],
    aface: &[f64],
    mass: &[f64],
    h: f64,
    theta_w: f64,
    dx: f64,
) -> Result<Vec<f64>> {
    let lf = flux_laplacian(aface, f, dx);
    if lf.iter().all(|&v| v == 0.0) {
        return Ok(f.to_vec());
    }
    let n = f.len();
    let inv_dx2 = 1.0 / (dx * dx);
    let mut sub = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for j in 0..n {
        let jm = (j + n - 1) % n;
        sub[j] = -theta_w * aface[jm] * inv_dx2;
        sup[j] = -theta_w * aface[j] * inv_dx2;
        diag[j] = mass[j] / h + theta_w * (aface[j] + aface[jm]) * inv_dx2;
        rhs[j] = mass[j] / h * f[j] + (1.0 - theta_w) * lf[j];
    }
    solve_cyclic(&sub, &diag, &sup, &rhs)
}

/// Deposit the viscous kinetic-energy loss into temperature. `u_eff` is the
/// velocity profile whose face gradients represent the dissipation of the
/// just-completed implicit substep (the Crank-Nicolson midpoint profile
/// makes the kinetic + internal energy budget close exactly).
fn deposit_viscous_heat(
    theta: &mut [f64],
    u_eff: &[f64],
    aface: &[f64],
    rho0: &[f64],
    cv: f64,
    h: f64,
    dx: f64,
) {
    let n = theta.len();
    let inv_dx2 = 1.0 / (dx * dx);
    let dissip: Vec<f64> = (0..n)
        .map(|j| {
            let jp = (j + 1) % n;
            let d = u_eff[jp] - u_eff[j];
            aface[j] * d * d * inv_dx2
        })
        .collect();
    for j in 0..n {
        let jm = (j + n - 1) % n;
        theta[j] += h * 0.5 * (dissip[j] + dissip[jm]) / (rho0[j] * cv);
    }
}

/// Right-hand side of the explicit (nonstiff) subsystem: density transport,
/// pressure gradient, pressure work, particle motion. The pressure force
/// and pressure work use the same face-averaged pressure, so their energy
/// exchange cancels exactly in the semi-discrete budget.
struct ExplicitRhs {
    drho: Vec<f64>,
    du: Vec<f64>,
    dtheta: Vec<f64>,
    dx_pos: Vec<f64>,
}

fn explicit_rhs(
    rho: &[f64],
    u: &[f64],
    theta: &[f64],
    rho0: &[f64],
    params: &GasParams,
    grid: &Grid,
) -> ExplicitRhs {
    let n = rho.len();
    let dx = grid.dx();
    let du_centered = grid.deriv(u);
    let p: Vec<f64> = (0..n).map(|j| params.r * rho[j] * theta[j]).collect();
    let pface: Vec<f64> = (0..n).map(|j| 0.5 * (p[j] + p[(j + 1) % n])).collect();
    let mut out = ExplicitRhs {
        drho: vec![0.0; n],
        du: vec![0.0; n],
        dtheta: vec![0.0; n],
        dx_pos: u.to_vec(),
    };
    for j in 0..n {
        let jp = (j + 1) % n;
        let jm = (j + n - 1) % n;
        out.drho[j] = -rho[j] * rho[j] * du_centered[j] / rho0[j];
        out.du[j] = -(pface[j] - pface[jm]) / (dx * rho0[j]);
        out.dtheta[j] = -(pface[j] * (u[jp] - u[j]) + pface[jm] * (u[j] - u[jm]))
            / (2.0 * dx * rho0[j] * params.cv);
    }
    out
}

fn check_positivity(rho: &[f64], theta: &[f64], t: f64, context: &str) -> Result<()> {
    for (name, f) in [("rho", rho), ("theta", theta)] {
        let mut min = f64::INFINITY;
        for &v in f.iter() {
            if !v.is_finite() {
                return Err(Error::Positivity {
                    context: format!("non-finite {name} during {context} at t = {t:.6e}"),
                    min_value: f64::NAN,
                });
            }
            min = min.min(v);
        }
        if !(min > 0.0) {
            return Err(Error::Positivity {
                context: format!("{name} during {context} at t = {t:.6e}"),
                min_value: min,
            });
        }
    }
    Ok(())
}

/// One IMEX step of the requested order. Returns the advanced state;
/// rejects (without mutating the input) if positivity is lost.
pub fn step(
    state: &LagState,
    grid: &Grid,
    dt: f64,
    params: &GasParams,
    order: SchemeOrder,
) -> Result<LagState> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("step needs dt > 0, got {dt}")));
    }
    match order {
        SchemeOrder::First => step_first(state, grid, dt, params),
        SchemeOrder::Second => step_second(state, grid, dt, params),
    }
}

fn step_first(state: &LagState, grid: &Grid, dt: f64, params: &GasParams) -> Result<LagState> {
    let n = grid.n();
    let dx = grid.dx();
    let rho0 = &state.rho0;

    // Explicit Euler on the nonstiff subsystem.
    let rhs = explicit_rhs(&state.rho, &state.u, &state.theta, rho0, params, grid);
    let rho: Vec<f64> = (0..n).map(|j| state.rho[j] + dt * rhs.drho[j]).collect();
    let mut u: Vec<f64> = (0..n).map(|j| state.u[j] + dt * rhs.du[j]).collect();
    let mut theta: Vec<f64> = (0..n).map(|j| state.theta[j] + dt * rhs.dtheta[j]).collect();
    let x_pos: Vec<f64> = (0..n).map(|j| state.x_pos[j] + dt * rhs.dx_pos[j]).collect();
    check_positivity(&rho, &theta, state.t, "explicit substep")?;

    // Backward Euler viscous solve, coefficients frozen at step start.
    let aface = face_coeff(params.mu, &state.rho, rho0);
    let u_new = implicit_diffusion(&u, &aface, rho0, dt, 1.0, dx)?;
    deposit_viscous_heat(&mut theta, &u_new, &aface, rho0, params.cv, dt, dx);
    u = u_new;

    // Backward Euler conduction solve (identity when kappa = 0: no solve).
    if params.kappa > 0.0 {
        let bface = face_coeff(params.kappa, &state.rho, rho0);
        let mass: Vec<f64> = rho0.iter().map(|&r| r * params.cv).collect();
        theta = implicit_diffusion(&theta, &bface, &mass, dt, 1.0, dx)?;
    }
    check_positivity(&rho, &theta, state.t, "implicit substep")?;

    Ok(LagState {
        t: state.t + dt,
        rho,
        u,
        theta,
        x_pos,
        rho0: rho0.clone(),
    })
}

/// Crank-Nicolson diffusion over `h` for both u (with exact heat deposit)
/// and theta, coefficients frozen from the supplied density profile.
fn cn_diffusion_half(
    u: &mut Vec<f64>,
    theta: &mut Vec<f64>,
    rho_frozen: &[f64],
    rho0: &[f64],
    params: &GasParams,
    grid: &Grid,
    h: f64,
) -> Result<()> {
    let dx = grid.dx();
    let aface = face_coeff(params.mu, rho_frozen, rho0);
    let u_new = implicit_diffusion(u, &aface, rho0, h, 0.5, dx)?;
    let u_half: Vec<f64> = u.iter().zip(&u_new).map(|(&a, &b)| 0.5 * (a + b)).collect();
    deposit_viscous_heat(theta, &u_half, &aface, rho0, params.cv, h, dx);
    *u = u_new;
    if params.kappa > 0.0 {
        let bface = face_coeff(params.kappa, rho_frozen, rho0);
        let mass: Vec<f64> = rho0.iter().map(|&r| r * params.cv).collect();
        *theta = implicit_diffusion(theta, &bface, &mass, h, 0.5, dx)?;
    }
    Ok(())
}

fn step_second(state: &LagState, grid: &Grid, dt: f64, params: &GasParams) -> Result<LagState> {
    let n = grid.n();
    let rho0 = &state.rho0;

    // First diffusion half-step.
    let mut u = state.u.clone();
    let mut theta = state.theta.clone();
    cn_diffusion_half(&mut u, &mut theta, &state.rho, rho0, params, grid, 0.5 * dt)?;
    check_positivity(&state.rho, &theta, state.t, "first diffusion half-step")?;

    // Explicit midpoint on the nonstiff subsystem.
    let rho = state.rho.clone();
    let x_pos = state.x_pos.clone();
    let k1 = explicit_rhs(&rho, &u, &theta, rho0, params, grid);
    let h2 = 0.5 * dt;
    let rho_m: Vec<f64> = (0..n).map(|j| rho[j] + h2 * k1.drho[j]).collect();
    let u_m: Vec<f64> = (0..n).map(|j| u[j] + h2 * k1.du[j]).collect();
    let theta_m: Vec<f64> = (0..n).map(|j| theta[j] + h2 * k1.dtheta[j]).collect();
    check_positivity(&rho_m, &theta_m, state.t, "midpoint stage")?;
    let k2 = explicit_rhs(&rho_m, &u_m, &theta_m, rho0, params, grid);
    let rho_new: Vec<f64> = (0..n).map(|j| rho[j] + dt * k2.drho[j]).collect();
    let u_new: Vec<f64> = (0..n).map(|j| u[j] + dt * k2.du[j]).collect();
    let theta_new: Vec<f64> = (0..n).map(|j| theta[j] + dt * k2.dtheta[j]).collect();
    let x_new: Vec<f64> = (0..n).map(|j| x_pos[j] + dt * k2.dx_pos[j]).collect();
    check_positivity(&rho_new, &theta_new, state.t, "explicit midpoint step")?;

    // Second diffusion half-step with updated coefficients.
    let mut u2 = u_new;
    let mut theta2 = theta_new;
    cn_diffusion_half(&mut u2, &mut theta2, &rho_new, rho0, params, grid, 0.5 * dt)?;
    check_positivity(&rho_new, &theta2, state.t, "second diffusion half-step")?;

    Ok(LagState {
        t: state.t + dt,
        rho: rho_new,
        u: u2,
        theta: theta2,
        x_pos: x_new,
        rho0: rho0.clone(),
    })
}

/// Boost-invariant step-size caps for the adaptive policy: the acoustic
/// signal speed in the label coordinate, (rho/rho0) sqrt(gamma R theta),
/// and a bound keeping the explicit pressure-work update from overshooting
/// the local internal energy.
fn adaptive_dt_cap(state: &LagState, grid: &Grid, params: &GasParams, cfl: f64) -> f64 {
    let n = grid.n();
    let gamma = params.gamma();
    let du = grid.deriv(&state.u);
    let mut max_speed = 0.0f64;
    let mut min_work_cap = f64::INFINITY;
    for j in 0..n {
        let c_label = state.rho[j] / state.rho0[j] * (gamma * params.r * state.theta[j]).sqrt();
        max_speed = max_speed.max(c_label);
        let work_rate = (params.r * state.rho[j] * state.theta[j] * du[j]).abs();
        if work_rate > 0.0 {
            min_work_cap = min_work_cap.min(state.rho0[j] * params.cv * state.theta[j] / work_rate);
        }
    }
    let mut cap = f64::INFINITY;
    if max_speed > 0.0 {
        cap = cap.min(cfl * grid.dx() / max_speed);
    }
    cap.min(cfl * min_work_cap)
}

/// Integrate to `t_end` with step-size control and positivity-driven step
/// rejection. Snapshots are taken every `snapshot_every` accepted steps and
/// always at t = 0 and t = t_end.
pub fn run(
    initial: LagState,
    grid: &Grid,
    params: &GasParams,
    config: &SolverConfig,
) -> Result<Trajectory> {
    config.validate()?;
    initial.validate(grid)?;
    if initial.t != 0.0 {
        return Err(Error::Config(format!("run expects initial time 0, got {}", initial.t)));
    }

    let mut snapshots = vec![initial.clone()];
    let mut dt_history = Vec::new();
    let mut state = initial;
    let mut step_idx: usize = 0;
    let t_end = config.t_end;

    while state.t < t_end {
        let mut dt = match config.dt_policy {
            DtPolicy::Adaptive => config
                .dt_initial
                .min(adaptive_dt_cap(&state, grid, params, config.cfl_safety)),
            DtPolicy::Fixed => config.dt_initial,
        };
        let remaining = t_end - state.t;
        if dt >= remaining * (1.0 - 1e-12) {
            dt = remaining;
        }

        let mut accepted = None;
        let mut halvings = 0u32;
        loop {
            match step(&state, grid, dt, params, config.scheme_order) {
                Ok(next) => {
                    accepted = Some(next);
                    break;
                }
                Err(Error::Positivity { .. }) if halvings < 20 => {
                    halvings += 1;
                    dt *= 0.5;
                }
                Err(Error::Positivity { .. }) => break,
                Err(e) => return Err(e),
            }
        }
        let next = match accepted {
            Some(s) => s,
            None => {
                let (rho_min, rho_max) = LagState::min_max(&state.rho);
                let (theta_min, theta_max) = LagState::min_max(&state.theta);
                return Err(Error::Blowup {
                    t: state.t,
                    halvings,
                    rho_min,
                    rho_max,
                    theta_min,
                    theta_max,
                });
            }
        };
        state = next;
        dt_history.push(dt);
        step_idx += 1;
        if step_idx % config.snapshot_every == 0 || state.t >= t_end {
            snapshots.push(state.clone());
        }
    }
    // Guarantee the final time is present exactly once.
    if let Some(last) = snapshots.last() {
        if last.t < t_end {
            snapshots.push(state.clone());
        }
    }
    Ok(Trajectory {
        grid: *grid,
        params: *params,
        config: *config,
        snapshots,
        dt_history,
    })
}

/// Centered label derivative of the (unwrapped) particle positions, using
/// the periodic extension X(x + 1) = X(x) + 1 across the torus seam.
pub fn flow_map_deriv(grid: &Grid, x_pos: &[f64]) -> Vec<f64> {
    let n = grid.n();
    let half_inv_dx = 0.5 / grid.dx();
    (0..n)
        .map(|j| {
            let xp = if j + 1 < n { x_pos[j + 1] } else { x_pos[0] + 1.0 };
            let xm = if j > 0 { x_pos[j - 1] } else { x_pos[n - 1] - 1.0 };
            (xp - xm) * half_inv_dx
        })
        .collect()
}

/// Max over snapshots and cells of |D(x_pos) - rho0/rho|: the discrete
/// Jacobian identity of the flow map.
pub fn flow_map_consistency(traj: &Trajectory) -> f64 {
    let mut max = 0.0f64;
    for snap in &traj.snapshots {
        let dxp = flow_map_deriv(&traj.grid, &snap.x_pos);
        for j in 0..traj.grid.n() {
            max = max.max((dxp[j] - snap.rho0[j] / snap.rho[j]).abs());
        }
    }
    max
}

/// Cumulative trapezoid integral of an extracted field along each particle
/// label: the Lagrangian realization of the right inverse of the material
/// derivative. Output `[k][j]` is the integral up to snapshot k at label j.
pub fn material_antiderivative<F>(traj: &Trajectory, extract: F) -> Vec<Vec<f64>>
where
    F: Fn(&LagState) -> Vec<f64>,
{
    let n = traj.grid.n();
    let m = traj.snapshots.len();
    let mut out = Vec::with_capacity(m);
    out.push(vec![0.0; n]);
    let mut prev_f = extract(&traj.snapshots[0]);
    for k in 1..m {
        let f = extract(&traj.snapshots[k]);
        let dt = traj.snapshots[k].t - traj.snapshots[k - 1].t;
        let prev_acc = &out[k - 1];
        let acc: Vec<f64> = (0..n)
            .map(|j| prev_acc[j] + 0.5 * (prev_f[j] + f[j]) * dt)
            .collect();
        out.push(acc);
        prev_f = f;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::thermo;
    use std::f64::consts::PI;

    fn constant_state(grid: &Grid) -> LagState {
        let n = grid.n();
        LagState::initial(grid, vec![1.0; n], vec![0.0; n], vec![1.0; n]).unwrap()
    }

    fn smooth_state(grid: &Grid) -> LagState {
        let xs = grid.cell_centers();
        let rho0: Vec<f64> = xs.iter().map(|&x| 1.0 + 0.3 * (2.0 * PI * x).sin()).collect();
        let u0: Vec<f64> = xs.iter().map(|&x| 0.1 * (2.0 * PI * x).sin()).collect();
        let th0: Vec<f64> = xs.iter().map(|&x| 1.0 + 0.1 * (2.0 * PI * x).cos()).collect();
        LagState::initial(grid, rho0, u0, th0).unwrap()
    }

    fn config(dt: f64, t_end: f64, order: SchemeOrder, policy: DtPolicy) -> SolverConfig {
        SolverConfig {
            dt_initial: dt,
            t_end,
            cfl_safety: 0.5,
            snapshot_every: 1,
            scheme_order: order,
            dt_policy: policy,
        }
    }

    #[test]
    fn constant_state_is_bitwise_fixed_point() {
        let grid = Grid::new(32).unwrap();
        let st = constant_state(&grid);
        for kappa in [0.0, 0.01, 0.1] {
            let params = GasParams::new(1.0, 1.0, 1.0, kappa).unwrap();
            for order in [SchemeOrder::First, SchemeOrder::Second] {
                let next = step(&st, &grid, 1e-2, &params, order).unwrap();
                assert_eq!(next.rho, st.rho);
                assert_eq!(next.u, st.u);
                assert_eq!(next.theta, st.theta);
                assert_eq!(next.x_pos, st.x_pos);
            }
        }
    }

    #[test]
    fn boosted_constant_state_translates() {
        let grid = Grid::new(32).unwrap();
        let n = grid.n();
        let v = 0.37;
        let st = LagState::initial(&grid, vec![1.0; n], vec![v; n], vec![1.0; n]).unwrap();
        let params = GasParams::new(1.0, 1.0, 1.0, 0.05).unwrap();
        let dt = 1e-2;
        let next = step(&st, &grid, dt, &params, SchemeOrder::Second).unwrap();
        assert_eq!(next.rho, st.rho);
        assert_eq!(next.theta, st.theta);
        for j in 0..n {
            assert!((next.u[j] - v).abs() < 1e-15);
            assert!((next.x_pos[j] - (st.x_pos[j] + v * dt)).abs() < 1e-15);
        }
    }

    #[test]
    fn galilean_equivariance_on_smooth_run() {
        let grid = Grid::new(64).unwrap();
        let params = GasParams::new(1.0, 1.0, 1.0, 0.01).unwrap();
        let cfg = config(1e-3, 0.05, SchemeOrder::Second, DtPolicy::Fixed);
        let base = smooth_state(&grid);
        let v = 0.85;
        let mut boosted = base.clone();
        for val in &mut boosted.u {
            *val += v;
        }
        let ta = run(base, &grid, &params, &cfg).unwrap();
        let tb = run(boosted, &grid, &params, &cfg).unwrap();
        let (a, b) = (ta.snapshots.last().unwrap(), tb.snapshots.last().unwrap());
        let t = a.t;
        for j in 0..grid.n() {
            assert!((a.rho[j] - b.rho[j]).abs() < 1e-11);
            assert!((a.theta[j] - b.theta[j]).abs() < 1e-11);
            assert!((a.u[j] + v - b.u[j]).abs() < 1e-11);
            assert!((a.x_pos[j] + v * t - b.x_pos[j]).abs() < 1e-11);
        }
    }

    /// Independent semi-discrete right-hand side (face fluxes re-coded with
    /// explicit index arithmetic) advanced with plain explicit Euler.
    fn explicit_euler_reference(
        st: &LagState,
        grid: &Grid,
        params: &GasParams,
        total: f64,
        substeps: usize,
    ) -> LagState {
        let n = grid.n();
        let dx = grid.dx();
        let h = total / substeps as f64;
        let mut rho = st.rho.clone();
        let mut u = st.u.clone();
        let mut theta = st.theta.clone();
        let mut x = st.x_pos.clone();
        for _ in 0..substeps {
            let mut drho = vec![0.0; n];
            let mut du = vec![0.0; n];
            let mut dth = vec![0.0; n];
            let p: Vec<f64> = (0..n).map(|j| params.r * rho[j] * theta[j]).collect();
            for j in 0..n {
                let jp = (j + 1) % n;
                let jm = (j + n - 1) % n;
                let ducen = (u[jp] - u[jm]) / (2.0 * dx);
                drho[j] = -rho[j] * rho[j] * ducen / st.rho0[j];
                let af = |k: usize| {
                    let kp = (k + 1) % n;
                    params.mu * 0.5 * (rho[k] / st.rho0[k] + rho[kp] / st.rho0[kp])
                };
                let bf = |k: usize| {
                    let kp = (k + 1) % n;
                    params.kappa * 0.5 * (rho[k] / st.rho0[k] + rho[kp] / st.rho0[kp])
                };
                let pf = |k: usize| 0.5 * (p[k] + p[(k + 1) % n]);
                let visc = (af(j) * (u[jp] - u[j]) - af(jm) * (u[j] - u[jm])) / (dx * dx);
                du[j] = (visc - (pf(j) - pf(jm)) / dx) / st.rho0[j];
                let cond = (bf(j) * (theta[jp] - theta[j]) - bf(jm) * (theta[j] - theta[jm]))
                    / (dx * dx);
                let heat_visc = 0.5
                    * (af(j) * (u[jp] - u[j]) * (u[jp] - u[j])
                        + af(jm) * (u[j] - u[jm]) * (u[j] - u[jm]))
                    / (dx * dx);
                let heat_press =
                    -(pf(j) * (u[jp] - u[j]) + pf(jm) * (u[j] - u[jm])) / (2.0 * dx);
                dth[j] = (heat_visc + heat_press + cond) / (st.rho0[j] * params.cv);
            }
            for j in 0..n {
                x[j] += h * u[j];
                rho[j] += h * drho[j];
                u[j] += h * du[j];
                theta[j] += h * dth[j];
            }
        }
        LagState {
            t: st.t + total,
            rho,
            u,
            theta,
            x_pos: x,
            rho0: st.rho0.clone(),
        }
    }

    fn state_err(a: &LagState, b: &LagState) -> f64 {
        let mut e = 0.0f64;
        for (x, y) in a.rho.iter().zip(&b.rho) {
            e = e.max((x - y).abs());
        }
        for (x, y) in a.u.iter().zip(&b.u) {
            e = e.max((x - y).abs());
        }
        for (x, y) in a.theta.iter().zip(&b.theta) {
            e = e.max((x - y).abs());
        }
        e
    }

    #[test]
    fn step_matches_fine_explicit_euler_reference() {
        let grid = Grid::new(128).unwrap();
        let st = smooth_state(&grid);
        let params = GasParams::new(1.0, 1.0, 1.0, 0.02).unwrap();
        for (order, min_ratio) in [(SchemeOrder::First, 1.8), (SchemeOrder::Second, 3.0)] {
            let dt = 1e-4;
            let reference = explicit_euler_reference(&st, &grid, &params, dt, 100);
            let one = step(&st, &grid, dt, &params, order).unwrap();
            let e1 = state_err(&one, &reference);

            let ref_half = explicit_euler_reference(&st, &grid, &params, dt / 2.0, 100);
            let half = step(&st, &grid, dt / 2.0, &params, order).unwrap();
            let e2 = state_err(&half, &ref_half);
            assert!(e1 < 1e-5, "{order:?}: one-step error too large: {e1}");
            assert!(e1 / e2 > min_ratio, "{order:?}: ratio {} (e1={e1}, e2={e2})", e1 / e2);
        }
    }

    #[test]
    fn smooth_run_completes_and_conduction_smooths() {
        let grid = Grid::new(128).unwrap();
        let base = smooth_state(&grid);
        let cfg = config(1e-3, 0.5, SchemeOrder::Second, DtPolicy::Adaptive);
        let p0 = GasParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let p1 = GasParams::new(1.0, 1.0, 1.0, 0.01).unwrap();
        let t0 = run(base.clone(), &grid, &p0, &cfg).unwrap();
        let t1 = run(base, &grid, &p1, &cfg).unwrap();
        for traj in [&t0, &t1] {
            let last = traj.snapshots.last().unwrap();
            assert!((last.t - 0.5).abs() < 1e-12);
            assert!(last.rho.iter().all(|&v| v > 0.0));
            assert!(last.theta.iter().all(|&v| v > 0.0));
        }
        let grad_energy = |traj: &Trajectory| {
            let last = traj.snapshots.last().unwrap();
            let dth = grid.deriv(&last.theta);
            grid.integral(&dth.iter().map(|v| v * v).collect::<Vec<_>>())
        };
        assert!(grad_energy(&t1) < grad_energy(&t0));
    }

    #[test]
    fn run_convergence_order_matches_scheme() {
        let grid = Grid::new(64).unwrap();
        let params = GasParams::new(1.0, 1.0, 1.0, 0.01).unwrap();
        let base = smooth_state(&grid);
        for (order, lo, hi) in [(SchemeOrder::First, 0.8, 1.6), (SchemeOrder::Second, 1.6, 2.6)] {
            let reference = run(
                base.clone(),
                &grid,
                &params,
                &config(6.25e-5, 0.1, order, DtPolicy::Fixed),
            )
            .unwrap();
            let fine = reference.snapshots.last().unwrap();
            let mut errs = Vec::new();
            for dt in [2e-3, 1e-3, 5e-4] {
                let traj =
                    run(base.clone(), &grid, &params, &config(dt, 0.1, order, DtPolicy::Fixed))
                        .unwrap();
                errs.push(state_err(traj.snapshots.last().unwrap(), fine));
            }
            let p1 = (errs[0] / errs[1]).log2();
            let p2 = (errs[1] / errs[2]).log2();
            let p = 0.5 * (p1 + p2);
            assert!(p >= lo && p <= hi, "{order:?}: observed order {p} ({errs:?})");
        }
    }

    #[test]
    fn flow_map_consistency_behaviour() {
        let grid = Grid::new(128).unwrap();
        let params = GasParams::new(1.0, 1.0, 1.0, 0.1).unwrap();
        let cfg = config(1e-3, 0.2, SchemeOrder::Second, DtPolicy::Adaptive);
        // Constant state: residual at machine precision.
        let tc = run(constant_state(&grid), &grid, &params, &cfg).unwrap();
        assert!(flow_map_consistency(&tc) < 1e-12);

        // Smooth run: residual decreases by >= factor 2 under refinement.
        let p0 = GasParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let mut residuals = Vec::new();
        for n in [128usize, 256] {
            let g = Grid::new(n).unwrap();
            let dt = 0.25 / n as f64;
            let traj = run(
                smooth_state(&g),
                &g,
                &p0,
                &config(dt, 0.2, SchemeOrder::Second, DtPolicy::Fixed),
            )
            .unwrap();
            residuals.push(flow_map_consistency(&traj));
        }
        assert!(residuals[0] / residuals[1] >= 2.0, "{residuals:?}");

        // Injected fault: a corrupted position shows up at the 0.01/(2dx) scale.
        let mut corrupted = tc.clone();
        let mid = corrupted.snapshots.len() / 2;
        corrupted.snapshots[mid].x_pos[10] += 0.01;
        let r = flow_map_consistency(&corrupted);
        let expected = 0.01 / (2.0 * grid.dx());
        assert!(r > 0.5 * expected && r < 2.0 * expected, "residual {r}, expected ~{expected}");
    }

    #[test]
    fn material_antiderivative_trivial_cases() {
        let grid = Grid::new(32).unwrap();
        let params = GasParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let cfg = config(1e-2, 0.3, SchemeOrder::First, DtPolicy::Fixed);
        let traj = run(constant_state(&grid), &grid, &params, &cfg).unwrap();
        let zeros = material_antiderivative(&traj, |_| vec![0.0; grid.n()]);
        assert!(zeros.iter().flatten().all(|&v| v == 0.0));
        let ones = material_antiderivative(&traj, |_| vec![1.0; grid.n()]);
        for (k, row) in ones.iter().enumerate() {
            let t = traj.snapshots[k].t;
            assert!(row.iter().all(|&v| (v - t).abs() < 1e-12));
        }
    }

    #[test]
    fn material_antiderivative_sigma_respects_momentum_bound() {
        // |D_t^{-1} sigma| <= 2 sqrt(2 M E) + T (gamma+1) E on a smooth,
        // momentum-normalized run.
        let grid = Grid::new(128).unwrap();
        let params = GasParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let mut st = smooth_state(&grid);
        let mom: f64 = grid.weighted_integral(&st.u, &st.rho0);
        let mass: f64 = grid.integral(&st.rho0);
        for v in &mut st.u {
            *v -= mom / mass;
        }
        let cfg = config(1e-3, 0.5, SchemeOrder::Second, DtPolicy::Adaptive);
        let traj = run(st, &grid, &params, &cfg).unwrap();
        let first = &traj.snapshots[0];
        let etot: Vec<f64> = first
            .u
            .iter()
            .zip(&first.theta)
            .map(|(&u, &th)| 0.5 * u * u + params.cv * th)
            .collect();
        let energy = grid.weighted_integral(&etot, &first.rho0);
        let sig = material_antiderivative(&traj, |s| {
            thermo(s, &params, &traj.grid).unwrap().sigma
        });
        let max_abs = sig.iter().flatten().fold(0.0f64, |m, &v| m.max(v.abs()));
        let bound = 2.0 * (2.0 * mass * energy).sqrt() + 0.5 * (params.gamma() + 1.0) * energy;
        assert!(max_abs <= bound * 1.05, "{max_abs} vs {bound}");
    }

    #[test]
    fn blowup_reports_after_halvings() {
        // Violently infeasible data at a huge fixed dt must abort cleanly.
        let grid = Grid::new(32).unwrap();
        let xs = grid.cell_centers();
        let rho0: Vec<f64> = xs.iter().map(|&x| 1.0 + 0.9 * (2.0 * PI * x).sin()).collect();
        let u0: Vec<f64> = xs.iter().map(|&x| 50.0 * (2.0 * PI * x).sin()).collect();
        let st = LagState::initial(&grid, rho0, u0, vec![1e-6; 32]).unwrap();
        let params = GasParams::new(1e-6, 1.0, 1.0, 0.0).unwrap();
        let cfg = SolverConfig {
            dt_initial: 10.0,
            t_end: 1.0,
            cfl_safety: 1.0,
            snapshot_every: 1,
            scheme_order: SchemeOrder::First,
            dt_policy: DtPolicy::Fixed,
        };
        match run(st, &grid, &params, &cfg) {
            Err(Error::Blowup { halvings, .. }) => assert_eq!(halvings, 20),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }
}
