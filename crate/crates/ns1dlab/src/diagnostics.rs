//! Functionals and identity residuals evaluated on trajectories.
//!
//! Every Eulerian integral over the moving domain is computed by the exact
//! change of variables to label coordinates: `int g dX = sum g (rho0/rho) dx`
//! (the flow-map Jacobian is rho0/rho). Eulerian spatial derivatives become
//! `(rho/rho0) D(.)` with the centered label derivative D. Time derivatives
//! in residuals use centered differences on the snapshot times; the first
//! and last snapshot are dropped from residual series, so residual series
//! carry their own (interior) time stamps.
//!
//! sup-norms are realized as grid maxima (a lower bound of the continuum
//! sup); no reconstruction is attempted.

use crate::error::{Error, Result};
use crate::gas::GasParams;
use crate::solver::{material_antiderivative, Trajectory};
use crate::state::{thermo, LagState};

/// Time weight min(1, t) used by the second (weighted) energy package.
pub fn time_weight(t: f64) -> f64 {
    t.min(1.0)
}

/// Cumulative trapezoid integral of a sampled series; same length as input,
/// starting at 0.
pub fn cumtrapz(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..values.len() {
        acc += 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
        out.push(acc);
    }
    out
}

fn trapz(times: &[f64], values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 1..values.len() {
        acc += 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
    }
    acc
}

/// Per-snapshot pointwise quantities shared by several diagnostics.
struct SnapshotFields {
    /// Eulerian quadrature weight rho0/rho.
    w: Vec<f64>,
    sigma: Vec<f64>,
    p: Vec<f64>,
    s: Vec<f64>,
    /// Eulerian du/dx = (rho/rho0) D(u).
    dxu: Vec<f64>,
    /// Eulerian dsigma/dx.
    dxsigma: Vec<f64>,
    /// Eulerian dtheta/dx.
    dxtheta: Vec<f64>,
    /// Eulerian d/dx( kappa dtheta/dx ).
    dxkdxtheta: Vec<f64>,
    /// Eulerian drho/dx.
    dxrho: Vec<f64>,
}

fn snapshot_fields(snap: &LagState, params: &GasParams, traj: &Trajectory) -> Result<SnapshotFields> {
    let grid = &traj.grid;
    let n = grid.n();
    let der = thermo(snap, params, grid)?;
    let jac: Vec<f64> = (0..n).map(|j| snap.rho[j] / snap.rho0[j]).collect();
    let w: Vec<f64> = (0..n).map(|j| 1.0 / jac[j]).collect();
    let du = grid.deriv(&snap.u);
    let dsig = grid.deriv(&der.sigma);
    let dth = grid.deriv(&snap.theta);
    let drho = grid.deriv(&snap.rho);
    let dxu: Vec<f64> = (0..n).map(|j| jac[j] * du[j]).collect();
    let dxsigma: Vec<f64> = (0..n).map(|j| jac[j] * dsig[j]).collect();
    let dxtheta: Vec<f64> = (0..n).map(|j| jac[j] * dth[j]).collect();
    let dxrho: Vec<f64> = (0..n).map(|j| jac[j] * drho[j]).collect();
    let flux: Vec<f64> = (0..n).map(|j| params.kappa * dxtheta[j]).collect();
    let dflux = grid.deriv(&flux);
    let dxkdxtheta: Vec<f64> = (0..n).map(|j| jac[j] * dflux[j]).collect();
    Ok(SnapshotFields {
        w,
        sigma: der.sigma,
        p: der.p,
        s: der.s,
        dxu,
        dxsigma,
        dxtheta,
        dxkdxtheta,
        dxrho,
    })
}

/// Eulerian integral of f^2 with the rho0/rho weight.
fn eul_sq_int(traj: &Trajectory, f: &[f64], w: &[f64]) -> f64 {
    let dx = traj.grid.dx();
    f.iter().zip(w).map(|(&v, &wi)| v * v * wi).sum::<f64>() * dx
}

#[derive(Debug, Clone)]
pub struct ConservedSeries {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub momentum: Vec<f64>,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub momentum_drift: f64,
}

/// Mass, total energy, and momentum as Lagrangian quadratures
/// sum rho0 phi dx with phi in {1, u^2/2 + cv theta, u}, plus max relative
/// drifts. The momentum drift is normalized by max(|momentum(0)|,
/// sqrt(M E)) so it stays meaningful on momentum-free data.
pub fn conserved_integrals(traj: &Trajectory) -> ConservedSeries {
    let grid = &traj.grid;
    let cv = traj.params.cv;
    let mut mass = Vec::new();
    let mut energy = Vec::new();
    let mut momentum = Vec::new();
    for snap in &traj.snapshots {
        mass.push(grid.integral(&snap.rho0));
        let etot: Vec<f64> = snap
            .u
            .iter()
            .zip(&snap.theta)
            .map(|(&u, &th)| 0.5 * u * u + cv * th)
            .collect();
        energy.push(grid.weighted_integral(&etot, &snap.rho0));
        momentum.push(grid.weighted_integral(&snap.u, &snap.rho0));
    }
    let rel_drift = |series: &[f64], scale: f64| {
        series
            .iter()
            .map(|v| (v - series[0]).abs())
            .fold(0.0f64, f64::max)
            / scale
    };
    let mass_drift = rel_drift(&mass, mass[0].abs().max(1e-300));
    let energy_drift = rel_drift(&energy, energy[0].abs().max(1e-300));
    let momentum_scale = momentum[0].abs().max((mass[0] * energy[0]).abs().sqrt()).max(1e-300);
    let momentum_drift = rel_drift(&momentum, momentum_scale);
    ConservedSeries {
        times: traj.times(),
        mass,
        energy,
        momentum,
        mass_drift,
        energy_drift,
        momentum_drift,
    }
}

#[derive(Debug, Clone)]
pub struct EntropyBalance {
    pub times: Vec<f64>,
    /// Instantaneous dissipation rate int mu (dxu)^2/theta + kappa (dxtheta)^2/theta^2 dX.
    pub production_rate: Vec<f64>,
    /// Cumulative (trapezoid) production, nondecreasing.
    pub production_cum: Vec<f64>,
    /// Total entropy sum rho0 s dx.
    pub entropy: Vec<f64>,
    /// Interior snapshot times of the residual series.
    pub residual_times: Vec<f64>,
    /// |d/dt entropy - production_rate| at interior snapshots.
    pub residual: Vec<f64>,
}

pub fn entropy_balance(traj: &Trajectory, params: &GasParams) -> Result<EntropyBalance> {
    let grid = &traj.grid;
    let dx = grid.dx();
    let times = traj.times();
    let mut rate = Vec::new();
    let mut entropy = Vec::new();
    for snap in &traj.snapshots {
        let f = snapshot_fields(snap, params, traj)?;
        let mut acc = 0.0;
        for j in 0..grid.n() {
            let th = snap.theta[j];
            acc += (params.mu * f.dxu[j] * f.dxu[j] / th
                + params.kappa * f.dxtheta[j] * f.dxtheta[j] / (th * th))
                * f.w[j];
        }
        rate.push(acc * dx);
        entropy.push(grid.weighted_integral(&f.s, &snap.rho0));
    }
    let production_cum = cumtrapz(&times, &rate);
    let mut residual_times = Vec::new();
    let mut residual = Vec::new();
    for k in 1..times.len().saturating_sub(1) {
        let ds = (entropy[k + 1] - entropy[k - 1]) / (times[k + 1] - times[k - 1]);
        residual_times.push(times[k]);
        residual.push((ds - rate[k]).abs());
    }
    Ok(EntropyBalance {
        times,
        production_rate: rate,
        production_cum,
        entropy,
        residual_times,
        residual,
    })
}

/// Residual series of the stress evolution law
/// `d_t sigma + u dx sigma - mu dx(dx sigma / rho) + gamma sigma dx u
///  + (gamma - 1) dx(kappa dx theta) = 0`
/// in label variables: the material derivative d_t sigma + u dx sigma is the
/// per-label centered time difference of sigma-tilde; each Eulerian dx is
/// (rho/rho0) D. Returns (interior times, Eulerian L2 norms).
pub fn sigma_pde_residual(traj: &Trajectory, params: &GasParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = traj.snapshots.len();
    if m < 3 {
        return Err(Error::InsufficientSnapshots { needed: 3, got: m });
    }
    let grid = &traj.grid;
    let n = grid.n();
    let gamma = params.gamma();
    let fields: Vec<SnapshotFields> = traj
        .snapshots
        .iter()
        .map(|s| snapshot_fields(s, params, traj))
        .collect::<Result<_>>()?;
    let times = traj.times();
    let mut out_t = Vec::new();
    let mut out = Vec::new();
    for k in 1..m - 1 {
        let snap = &traj.snapshots[k];
        let f = &fields[k];
        let dt2 = times[k + 1] - times[k - 1];
        // mu dx(dx sigma / rho) = mu (rho/rho0) D( D(sigma)/rho0 ).
        let dsig_label = grid.deriv(&f.sigma);
        let inner: Vec<f64> = (0..n).map(|j| dsig_label[j] / snap.rho0[j]).collect();
        let dinner = grid.deriv(&inner);
        let mut r = Vec::with_capacity(n);
        for j in 0..n {
            let jac = snap.rho[j] / snap.rho0[j];
            let mat_dt = (fields[k + 1].sigma[j] - fields[k - 1].sigma[j]) / dt2;
            let visc = params.mu * jac * dinner[j];
            let rj = mat_dt - visc + gamma * f.sigma[j] * f.dxu[j]
                + (gamma - 1.0) * f.dxkdxtheta[j];
            r.push(rj);
        }
        out_t.push(times[k]);
        out.push(eul_sq_int(traj, &r, &f.w).sqrt());
    }
    Ok((out_t, out))
}

/// Residual of the transport law for q = p^(1/gamma):
/// `d_t q + dx(q u) = ((gamma-1)/gamma) [mu (dx u)^2 + dx(kappa dx theta)] p^(1/gamma - 1)`.
/// Lagrangian realization: for any quantity g, d_t(rho g) + dx(rho g u)
/// composed with the flow equals rho times the per-label time derivative of
/// g-tilde; with g = q/rho the left side becomes
/// `rho * d/dt (q-tilde / rho-tilde)` per label, which is what the centered
/// time difference evaluates. `include_conduction_term` exists for the
/// controlled-omission comparison (omitting it must leave an O(kappa)
/// plateau).
pub fn pgamma_identity_residual(
    traj: &Trajectory,
    params: &GasParams,
    include_conduction_term: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = traj.snapshots.len();
    if m < 3 {
        return Err(Error::InsufficientSnapshots { needed: 3, got: m });
    }
    let grid = &traj.grid;
    let n = grid.n();
    let gamma = params.gamma();
    let inv_gamma = 1.0 / gamma;
    let fields: Vec<SnapshotFields> = traj
        .snapshots
        .iter()
        .map(|s| snapshot_fields(s, params, traj))
        .collect::<Result<_>>()?;
    // q/rho per snapshot.
    let qr: Vec<Vec<f64>> = traj
        .snapshots
        .iter()
        .zip(&fields)
        .map(|(s, f)| (0..n).map(|j| f.p[j].powf(inv_gamma) / s.rho[j]).collect())
        .collect();
    let times = traj.times();
    let mut out_t = Vec::new();
    let mut out = Vec::new();
    for k in 1..m - 1 {
        let snap = &traj.snapshots[k];
        let f = &fields[k];
        let dt2 = times[k + 1] - times[k - 1];
        let mut r = Vec::with_capacity(n);
        for j in 0..n {
            let lhs = snap.rho[j] * (qr[k + 1][j] - qr[k - 1][j]) / dt2;
            let mut src = params.mu * f.dxu[j] * f.dxu[j];
            if include_conduction_term {
                src += f.dxkdxtheta[j];
            }
            let rhs = (gamma - 1.0) / gamma * src * f.p[j].powf(inv_gamma - 1.0);
            r.push(lhs - rhs);
        }
        out_t.push(times[k]);
        out.push(eul_sq_int(traj, &r, &f.w).sqrt());
    }
    Ok((out_t, out))
}

/// Terms of the first (unweighted) energy package.
#[derive(Debug, Clone, Copy)]
pub struct HoffFirst {
    pub sup_int_sigma_sq: f64,
    pub sup_int_dxu_sq: f64,
    pub kappa_int_int_dxtheta_sq: f64,
    pub int_int_dxsigma_sq: f64,
    pub int_int_dtu_sq: f64,
    pub int_sup_sigma_sq: f64,
    pub int_sup_dxu_sq: f64,
    pub sup_u_sq: f64,
}

impl HoffFirst {
    pub fn terms(&self) -> [(&'static str, f64); 8] {
        [
            ("hoff1.sup_int_sigma_sq", self.sup_int_sigma_sq),
            ("hoff1.sup_int_dxu_sq", self.sup_int_dxu_sq),
            ("hoff1.kappa_int_int_dxtheta_sq", self.kappa_int_int_dxtheta_sq),
            ("hoff1.int_int_dxsigma_sq", self.int_int_dxsigma_sq),
            ("hoff1.int_int_dtu_sq", self.int_int_dtu_sq),
            ("hoff1.int_sup_sigma_sq", self.int_sup_sigma_sq),
            ("hoff1.int_sup_dxu_sq", self.int_sup_dxu_sq),
            ("hoff1.sup_u_sq", self.sup_u_sq),
        ]
    }
}

/// Terms of the second package, weighted by w(t) = min(1,t).
#[derive(Debug, Clone, Copy)]
pub struct HoffSecond {
    pub sup_w_int_dxsigma_sq: f64,
    pub sup_w_kappa_int_dxtheta_sq: f64,
    pub int_w_int_dtsigma_sq: f64,
    pub int_w_int_dxkdxtheta_sq: f64,
}

impl HoffSecond {
    pub fn terms(&self) -> [(&'static str, f64); 4] {
        [
            ("hoff2.sup_w_int_dxsigma_sq", self.sup_w_int_dxsigma_sq),
            ("hoff2.sup_w_kappa_int_dxtheta_sq", self.sup_w_kappa_int_dxtheta_sq),
            ("hoff2.int_w_int_dtsigma_sq", self.int_w_int_dtsigma_sq),
            ("hoff2.int_w_int_dxkdxtheta_sq", self.int_w_int_dxkdxtheta_sq),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct HoffEnergies {
    pub hoff1: HoffFirst,
    pub hoff2: HoffSecond,
    /// A1(t) = int sigma^2 dX + mu int_0^t int (dx sigma)^2 / rho dX.
    pub a1: Vec<f64>,
    /// A2(t) = A1(t) + int_0^t A1.
    pub a2: Vec<f64>,
}

pub fn hoff_energies(traj: &Trajectory, params: &GasParams) -> Result<HoffEnergies> {
    let m = traj.snapshots.len();
    if m < 3 {
        return Err(Error::InsufficientSnapshots { needed: 3, got: m });
    }
    let grid = &traj.grid;
    let n = grid.n();
    let dx = grid.dx();
    let times = traj.times();
    let fields: Vec<SnapshotFields> = traj
        .snapshots
        .iter()
        .map(|s| snapshot_fields(s, params, traj))
        .collect::<Result<_>>()?;

    let mut int_sigma_sq = Vec::with_capacity(m);
    let mut int_dxu_sq = Vec::with_capacity(m);
    let mut int_dxtheta_sq = Vec::with_capacity(m);
    let mut int_dxsigma_sq = Vec::with_capacity(m);
    let mut int_dxsigma_sq_rho = Vec::with_capacity(m);
    let mut int_dtu_sq = Vec::with_capacity(m);
    let mut int_dxkdxtheta_sq = Vec::with_capacity(m);
    let mut sup_sigma_sq = Vec::with_capacity(m);
    let mut sup_dxu_sq = Vec::with_capacity(m);
    let mut sup_u_sq = 0.0f64;
    for (snap, f) in traj.snapshots.iter().zip(&fields) {
        int_sigma_sq.push(eul_sq_int(traj, &f.sigma, &f.w));
        int_dxu_sq.push(eul_sq_int(traj, &f.dxu, &f.w));
        int_dxtheta_sq.push(eul_sq_int(traj, &f.dxtheta, &f.w));
        int_dxsigma_sq.push(eul_sq_int(traj, &f.dxsigma, &f.w));
        int_dxsigma_sq_rho.push(
            (0..n)
                .map(|j| f.dxsigma[j] * f.dxsigma[j] / snap.rho[j] * f.w[j])
                .sum::<f64>()
                * dx,
        );
        // d_t u (Eulerian partial) = dx sigma / rho - u dx u, which in label
        // variables is D(sigma)/rho0 - u (rho/rho0) D(u); the first term is
        // dxsigma/rho.
        let dtu: Vec<f64> = (0..n)
            .map(|j| f.dxsigma[j] / snap.rho[j] - snap.u[j] * f.dxu[j])
            .collect();
        int_dtu_sq.push(eul_sq_int(traj, &dtu, &f.w));
        int_dxkdxtheta_sq.push(eul_sq_int(traj, &f.dxkdxtheta, &f.w));
        sup_sigma_sq.push(f.sigma.iter().map(|v| v * v).fold(0.0, f64::max));
        sup_dxu_sq.push(f.dxu.iter().map(|v| v * v).fold(0.0, f64::max));
        sup_u_sq = sup_u_sq.max(snap.u.iter().map(|v| v * v).fold(0.0, f64::max));
    }

    let sup = |v: &[f64]| v.iter().cloned().fold(0.0f64, f64::max);
    let hoff1 = HoffFirst {
        sup_int_sigma_sq: sup(&int_sigma_sq),
        sup_int_dxu_sq: sup(&int_dxu_sq),
        kappa_int_int_dxtheta_sq: params.kappa * trapz(&times, &int_dxtheta_sq),
        int_int_dxsigma_sq: trapz(&times, &int_dxsigma_sq),
        int_int_dtu_sq: trapz(&times, &int_dtu_sq),
        int_sup_sigma_sq: trapz(&times, &sup_sigma_sq),
        int_sup_dxu_sq: trapz(&times, &sup_dxu_sq),
        sup_u_sq,
    };

    // Weighted package. The d_t sigma term needs interior time differences:
    // d_t sigma = (per-label centered difference of sigma) - u dx sigma.
    let mut w_int_dxsigma_sq = Vec::with_capacity(m);
    let mut w_kappa_int_dxtheta_sq = Vec::with_capacity(m);
    let mut w_int_dxkdxtheta_sq = Vec::with_capacity(m);
    for k in 0..m {
        let wt = time_weight(times[k]);
        w_int_dxsigma_sq.push(wt * int_dxsigma_sq[k]);
        w_kappa_int_dxtheta_sq.push(wt * params.kappa * int_dxtheta_sq[k]);
        w_int_dxkdxtheta_sq.push(wt * int_dxkdxtheta_sq[k]);
    }
    let mut interior_times = Vec::with_capacity(m - 2);
    let mut w_int_dtsigma_sq = Vec::with_capacity(m - 2);
    for k in 1..m - 1 {
        let snap = &traj.snapshots[k];
        let f = &fields[k];
        let dt2 = times[k + 1] - times[k - 1];
        let dtsigma: Vec<f64> = (0..n)
            .map(|j| {
                let mat = (fields[k + 1].sigma[j] - fields[k - 1].sigma[j]) / dt2;
                mat - snap.u[j] * f.dxsigma[j]
            })
            .collect();
        interior_times.push(times[k]);
        w_int_dtsigma_sq.push(time_weight(times[k]) * eul_sq_int(traj, &dtsigma, &f.w));
    }
    let hoff2 = HoffSecond {
        sup_w_int_dxsigma_sq: sup(&w_int_dxsigma_sq),
        sup_w_kappa_int_dxtheta_sq: sup(&w_kappa_int_dxtheta_sq),
        int_w_int_dtsigma_sq: trapz(&interior_times, &w_int_dtsigma_sq),
        int_w_int_dxkdxtheta_sq: trapz(&times, &w_int_dxkdxtheta_sq),
    };

    let cum = cumtrapz(&times, &int_dxsigma_sq_rho);
    let a1: Vec<f64> = (0..m).map(|k| int_sigma_sq[k] + params.mu * cum[k]).collect();
    let a1_cum = cumtrapz(&times, &a1);
    let a2: Vec<f64> = (0..m).map(|k| a1[k] + a1_cum[k]).collect();

    Ok(HoffEnergies { hoff1, hoff2, a1, a2 })
}

#[derive(Debug, Clone)]
pub struct BoundsReport {
    pub times: Vec<f64>,
    pub rho_min: Vec<f64>,
    pub rho_max: Vec<f64>,
    pub theta_min: Vec<f64>,
    pub theta_max: Vec<f64>,
    pub global_rho_min: f64,
    pub global_rho_max: f64,
    pub global_theta_min: f64,
    pub global_theta_max: f64,
}

pub fn bounds_report(traj: &Trajectory) -> BoundsReport {
    let mut rep = BoundsReport {
        times: traj.times(),
        rho_min: Vec::new(),
        rho_max: Vec::new(),
        theta_min: Vec::new(),
        theta_max: Vec::new(),
        global_rho_min: f64::INFINITY,
        global_rho_max: f64::NEG_INFINITY,
        global_theta_min: f64::INFINITY,
        global_theta_max: f64::NEG_INFINITY,
    };
    for snap in &traj.snapshots {
        let (rlo, rhi) = LagState::min_max(&snap.rho);
        let (tlo, thi) = LagState::min_max(&snap.theta);
        rep.rho_min.push(rlo);
        rep.rho_max.push(rhi);
        rep.theta_min.push(tlo);
        rep.theta_max.push(thi);
        rep.global_rho_min = rep.global_rho_min.min(rlo);
        rep.global_rho_max = rep.global_rho_max.max(rhi);
        rep.global_theta_min = rep.global_theta_min.min(tlo);
        rep.global_theta_max = rep.global_theta_max.max(thi);
    }
    rep
}

/// kappa^alpha-weighted regularity quantities (all zeros when kappa = 0).
#[derive(Debug, Clone, Copy)]
pub struct WeightedRegularity {
    pub alpha: f64,
    pub sup_kalpha_int_dxtheta_sq: f64,
    pub sup_kalpha_int_dxrho_sq: f64,
    pub kalpham1_int_int_dxkdxtheta_sq: f64,
    pub sup_kappa_int_dxtheta_sq: f64,
    pub sup_kappa_sup_dxrho_sq: f64,
    pub sup_kappa_sup_dxtheta_sq: f64,
}

pub fn weighted_regularity(
    traj: &Trajectory,
    params: &GasParams,
    alpha: f64,
) -> Result<WeightedRegularity> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let mut rep = WeightedRegularity {
        alpha,
        sup_kalpha_int_dxtheta_sq: 0.0,
        sup_kalpha_int_dxrho_sq: 0.0,
        kalpham1_int_int_dxkdxtheta_sq: 0.0,
        sup_kappa_int_dxtheta_sq: 0.0,
        sup_kappa_sup_dxrho_sq: 0.0,
        sup_kappa_sup_dxtheta_sq: 0.0,
    };
    let kappa = params.kappa;
    if kappa == 0.0 {
        return Ok(rep);
    }
    let times = traj.times();
    let mut int_dxkdxtheta_sq = Vec::new();
    for snap in &traj.snapshots {
        let f = snapshot_fields(snap, params, traj)?;
        let i_dxtheta = eul_sq_int(traj, &f.dxtheta, &f.w);
        let i_dxrho = eul_sq_int(traj, &f.dxrho, &f.w);
        int_dxkdxtheta_sq.push(eul_sq_int(traj, &f.dxkdxtheta, &f.w));
        let s_dxrho = f.dxrho.iter().map(|v| v * v).fold(0.0, f64::max);
        let s_dxtheta = f.dxtheta.iter().map(|v| v * v).fold(0.0, f64::max);
        rep.sup_kalpha_int_dxtheta_sq = rep.sup_kalpha_int_dxtheta_sq.max(kappa.powf(alpha) * i_dxtheta);
        rep.sup_kalpha_int_dxrho_sq = rep.sup_kalpha_int_dxrho_sq.max(kappa.powf(alpha) * i_dxrho);
        rep.sup_kappa_int_dxtheta_sq = rep.sup_kappa_int_dxtheta_sq.max(kappa * i_dxtheta);
        rep.sup_kappa_sup_dxrho_sq = rep.sup_kappa_sup_dxrho_sq.max(kappa * s_dxrho);
        rep.sup_kappa_sup_dxtheta_sq = rep.sup_kappa_sup_dxtheta_sq.max(kappa * s_dxtheta);
    }
    rep.kalpham1_int_int_dxkdxtheta_sq = kappa.powf(alpha - 1.0) * trapz(&times, &int_dxkdxtheta_sq);
    Ok(rep)
}

#[derive(Debug, Clone, Copy)]
pub struct DtinvSigmaCheck {
    pub max_abs: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Checks |D_t^{-1} sigma| <= 2 sqrt(2 M E) + T (gamma+1) E using the
/// run's own mass and initial energy. Requires momentum-free data (the
/// bound is stated in the zero-mean-momentum frame).
pub fn dtinv_sigma_check(traj: &Trajectory, params: &GasParams) -> Result<DtinvSigmaCheck> {
    let cons = conserved_integrals(traj);
    let mass = cons.mass[0];
    let energy = cons.energy[0];
    let tol = 1e-8 * (mass * energy).abs().sqrt().max(1.0);
    if cons.momentum[0].abs() > tol {
        return Err(Error::Normalization {
            momentum: cons.momentum[0],
            tol,
        });
    }
    let sig = material_antiderivative(traj, |s| thermo(s, params, &traj.grid).unwrap().sigma);
    let max_abs = sig.iter().flatten().fold(0.0f64, |m, &v| m.max(v.abs()));
    let t_end = traj.times().last().copied().unwrap_or(0.0);
    let bound = 2.0 * (2.0 * mass * energy).sqrt() + t_end * (params.gamma() + 1.0) * energy;
    Ok(DtinvSigmaCheck {
        max_abs,
        bound,
        pass: max_abs <= bound * 1.05,
    })
}

/// Maximum deviation of the discrete Eulerian torus length
/// sum (rho0/rho) dx from 1 over all snapshots (change-of-variables sanity).
pub fn torus_length_deviation(traj: &Trajectory) -> f64 {
    let grid = &traj.grid;
    let mut max = 0.0f64;
    for snap in &traj.snapshots {
        let w: Vec<f64> = snap.rho0.iter().zip(&snap.rho).map(|(&a, &b)| a / b).collect();
        max = max.max((grid.integral(&w) - 1.0).abs());
    }
    max
}

/// Everything at once, as written to the diagnostics CSV by the CLI.
#[derive(Debug, Clone)]
pub struct DiagnosticsReport {
    pub conserved: ConservedSeries,
    pub pressure_int: Vec<f64>,
    pub kinetic_int: Vec<f64>,
    pub entropy: EntropyBalance,
    pub bounds: BoundsReport,
    pub hoff: HoffEnergies,
    pub sigma_residual_times: Vec<f64>,
    pub sigma_residual: Vec<f64>,
    pub pgamma_residual: Vec<f64>,
    pub weighted: WeightedRegularity,
    /// None when the run is not momentum-normalized (check inapplicable).
    pub dtinv_sigma: Option<DtinvSigmaCheck>,
    pub torus_length_dev: f64,
}

/// Default exponent for the kappa^alpha-weighted quantities.
pub const DEFAULT_ALPHA: f64 = 0.5;

pub fn report(traj: &Trajectory, params: &GasParams) -> Result<DiagnosticsReport> {
    let grid = &traj.grid;
    let conserved = conserved_integrals(traj);
    let mut pressure_int = Vec::new();
    let mut kinetic_int = Vec::new();
    for snap in &traj.snapshots {
        // int p dX = sum R rho theta (rho0/rho) dx = sum R rho0 theta dx.
        pressure_int.push(params.r * grid.weighted_integral(&snap.theta, &snap.rho0));
        let ke: Vec<f64> = snap.u.iter().map(|&u| 0.5 * u * u).collect();
        kinetic_int.push(grid.weighted_integral(&ke, &snap.rho0));
    }
    let entropy = entropy_balance(traj, params)?;
    let bounds = bounds_report(traj);
    let hoff = hoff_energies(traj, params)?;
    let (sigma_residual_times, sigma_residual) = sigma_pde_residual(traj, params)?;
    let (_, pgamma_residual) = pgamma_identity_residual(traj, params, true)?;
    let weighted = weighted_regularity(traj, params, DEFAULT_ALPHA)?;
    let dtinv_sigma = match dtinv_sigma_check(traj, params) {
        Ok(c) => Some(c),
        Err(Error::Normalization { .. }) => None,
        Err(e) => return Err(e),
    };
    let torus_length_dev = torus_length_deviation(traj);
    Ok(DiagnosticsReport {
        conserved,
        pressure_int,
        kinetic_int,
        entropy,
        bounds,
        hoff,
        sigma_residual_times,
        sigma_residual,
        pgamma_residual,
        weighted,
        dtinv_sigma,
        torus_length_dev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::GasParams;
    use crate::grid::Grid;
    use crate::solver::{run, DtPolicy, SchemeOrder, SolverConfig};
    use crate::state::LagState;
    use std::f64::consts::PI;

    fn cfg(dt: f64, t_end: f64) -> SolverConfig {
        SolverConfig {
            dt_initial: dt,
            t_end,
            cfl_safety: 0.5,
            snapshot_every: 1,
            scheme_order: SchemeOrder::Second,
            dt_policy: DtPolicy::Fixed,
        }
    }

    fn constant_traj(kappa: f64) -> (Trajectory, GasParams) {
        let grid = Grid::new(32).unwrap();
        let params = GasParams::new(1.0, 1.0, 1.0, kappa).unwrap();
        let st = LagState::initial(&grid, vec![1.0; 32], vec![0.0; 32], vec![1.0; 32]).unwrap();
        (run(st, &grid, &params, &cfg(1e-2, 0.3)).unwrap(), params)
    }

    fn smooth_traj(kappa: f64, n: usize, t_end: f64) -> (Trajectory, GasParams) {
        let grid = Grid::new(n).unwrap();
        let params = GasParams::new(1.0, 1.0, 1.0, kappa).unwrap();
        let xs = grid.cell_centers();
        let rho0: Vec<f64> = xs.iter().map(|&x| 1.0 + 0.3 * (2.0 * PI * x).sin()).collect();
        let u0: Vec<f64> = xs.iter().map(|&x| 0.1 * (2.0 * PI * x).sin()).collect();
        let st = LagState::initial(&grid, rho0, u0, vec![1.0; n]).unwrap();
        (run(st, &grid, &params, &cfg(0.2 / n as f64, t_end)).unwrap(), params)
    }

    #[test]
    fn constant_state_all_residuals_zero() {
        let (traj, params) = constant_traj(0.1);
        let rep = report(&traj, &params).unwrap();
        assert!(rep.entropy.residual.iter().all(|&v| v == 0.0));
        assert!(rep.entropy.production_rate.iter().all(|&v| v == 0.0));
        assert!(rep.sigma_residual.iter().all(|&v| v == 0.0));
        assert!(rep.pgamma_residual.iter().all(|&v| v == 0.0));
        assert_eq!(rep.conserved.mass_drift, 0.0);
        assert_eq!(rep.conserved.energy_drift, 0.0);
        // Closed forms on the constant state.
        assert!(rep.hoff.hoff1.sup_int_sigma_sq - 1.0 < 1e-12); // (R rho theta)^2 = 1
        assert_eq!(rep.hoff.hoff1.sup_u_sq, 0.0);
        assert_eq!(rep.hoff.hoff1.sup_int_dxu_sq, 0.0);
        assert_eq!(rep.bounds.global_rho_min, 1.0);
        assert_eq!(rep.bounds.global_theta_max, 1.0);
        assert!(rep.torus_length_dev < 1e-14);
    }

    #[test]
    fn constant_state_dtinv_closed_form() {
        // T = 1, rho = theta = R = cv = 1: M = 1, E = 1, gamma = 2, so the
        // bound is 2 sqrt(2) + T (gamma+1) E = 2 sqrt(2) + 3, while
        // |D_t^-1 sigma| = |integral of -1| = t <= 1.
        let grid = Grid::new(32).unwrap();
        let params = GasParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let st = LagState::initial(&grid, vec![1.0; 32], vec![0.0; 32], vec![1.0; 32]).unwrap();
        let traj = run(st, &grid, &params, &cfg(1e-2, 1.0)).unwrap();
        let chk = dtinv_sigma_check(&traj, &params).unwrap();
        assert!((chk.max_abs - 1.0).abs() < 1e-10);
        assert!((chk.bound - (2.0 * 2.0f64.sqrt() + 3.0)).abs() < 1e-12);
        assert!(chk.pass);
    }

    #[test]
    fn dtinv_rejects_unnormalized_momentum() {
        let grid = Grid::new(32).unwrap();
        let params = GasParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let st = LagState::initial(&grid, vec![1.0; 32], vec![5.0; 32], vec![1.0; 32]).unwrap();
        let traj = run(st, &grid, &params, &cfg(1e-2, 0.1)).unwrap();
        match dtinv_sigma_check(&traj, &params) {
            Err(crate::error::Error::Normalization { .. }) => {}
            other => panic!("expected normalization error, got {other:?}"),
        }
    }

    #[test]
    fn entropy_production_nondecreasing_and_kappa_free_at_zero() {
        let (traj, params) = smooth_traj(0.0, 128, 0.2);
        let eb = entropy_balance(&traj, &params).unwrap();
        for k in 1..eb.production_cum.len() {
            assert!(eb.production_cum[k] >= eb.production_cum[k - 1]);
        }
        // With kappa = 0 the production rate must equal the mu-term alone:
        // recompute it directly.
        let grid = &traj.grid;
        for (snap, &rate) in traj.snapshots.iter().zip(&eb.production_rate) {
            let du = grid.deriv(&snap.u);
            let mut acc = 0.0;
            for j in 0..grid.n() {
                let jac = snap.rho[j] / snap.rho0[j];
                let dxu = jac * du[j];
                acc += params.mu * dxu * dxu / snap.theta[j] / jac;
            }
            acc *= grid.dx();
            assert!((acc - rate).abs() <= 1e-12 * rate.abs().max(1.0));
        }
    }

    #[test]
    fn hoff_ordering_and_nonnegativity() {
        let (traj, params) = smooth_traj(0.01, 128, 0.3);
        let h = hoff_energies(&traj, &params).unwrap();
        for (_, v) in h.hoff1.terms() {
            assert!(v >= 0.0);
        }
        for (_, v) in h.hoff2.terms() {
            assert!(v >= 0.0);
        }
        let int_sigma_sq_0 = h.a1[0];
        assert!(int_sigma_sq_0 > 0.0);
        for k in 0..h.a1.len() {
            assert!(h.a2[k] >= h.a1[k] - 1e-14);
        }
    }

    #[test]
    fn sigma_residual_negative_control() {
        // Negative control: evaluating the residual with deliberately wrong
        // physics (adiabatic exponent driven to ~1 via a huge cv) must leave
        // an O(1), non-decaying residual instead of a truncation-level one.
        // Compare away from the startup snapshots (where the truncation
        // error of the centered differences peaks): at the final interior
        // time the correct-physics residual has settled to truncation level
        // while the corrupted one stays O(1).
        let (traj, params) = smooth_traj(0.0, 128, 0.1);
        let (_, good) = sigma_pde_residual(&traj, &params).unwrap();
        let bad_params = GasParams::new(params.mu, params.r, params.cv * 1e9, params.kappa).unwrap();
        let (_, bad) = sigma_pde_residual(&traj, &bad_params).unwrap();
        let good_last = *good.last().unwrap();
        let bad_last = *bad.last().unwrap();
        assert!(bad_last > 3.0 * good_last, "good {good_last}, bad {bad_last}");
        assert!(bad_last > 0.1, "corrupted residual not O(1): {bad_last}");
    }

    #[test]
    fn pgamma_controlled_omission_leaves_kappa_plateau() {
        let (traj, params) = smooth_traj(0.05, 128, 0.2);
        let (_, full) = pgamma_identity_residual(&traj, &params, true).unwrap();
        let (_, omitted) = pgamma_identity_residual(&traj, &params, false).unwrap();
        let full_max = full.iter().cloned().fold(0.0f64, f64::max);
        let omitted_max = omitted.iter().cloned().fold(0.0f64, f64::max);
        assert!(omitted_max > 3.0 * full_max, "full {full_max}, omitted {omitted_max}");
    }

    #[test]
    fn weighted_regularity_zero_for_kappa_zero() {
        let (traj, params) = smooth_traj(0.0, 64, 0.1);
        let w = weighted_regularity(&traj, &params, 0.5).unwrap();
        assert_eq!(w.sup_kalpha_int_dxtheta_sq, 0.0);
        assert_eq!(w.sup_kappa_sup_dxrho_sq, 0.0);
    }

    #[test]
    fn mass_exact_for_sine_density() {
        let (traj, _) = smooth_traj(0.0, 128, 0.1);
        let cons = conserved_integrals(&traj);
        assert!((cons.mass[0] - 1.0).abs() < 1e-13); // sine integrates to zero
        assert_eq!(cons.mass_drift, 0.0);
    }
}
