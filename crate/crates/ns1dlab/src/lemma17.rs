//! Comparison-lemma toolkit for scalar differential inequalities of the form
//!
//! ```text
//! d tau / dt <= D tau + kappa delta(t) Phi(tau),   tau(0) = tau0 > 0,
//! ```
//!
//! with `delta >= 0` integrable and `Phi > 0` nondecreasing. Writing
//! `Psi(y) = int_{tau0}^{y} ds / Phi(s)` (so `Psi(tau0) = 0`), the `D = 0`
//! inequality integrates to `Psi(tau(t)) <= kappa int_0^t delta`, which is
//! solvable for `tau` as long as `kappa int delta` stays below
//! `sup Psi = Psi(infinity)`. For `D > 0` the substitution
//! `tau = e^{Dt} z` reduces to the `D = 0` case with the enlarged
//! nonlinearity `Phi(e^{DT} z)`, valid on `[0, T]`.
//!
//! The module computes the admissible-conductivity threshold `kappa0`, the
//! a-priori ceiling `tau_bar(kappa)`, verifies the bound against a direct
//! numerical integration of the comparison ODE, and pairs the abstract
//! lemma with a measured simulation trajectory (the second energy
//! functional plays the role of `tau`).

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::gas::GasParams;
use crate::solver::Trajectory;

/// Safety factor: `kappa0` keeps this fraction of the exact threshold.
const THRESHOLD_MARGIN: f64 = 1e-3;
/// Relative plateau criterion for declaring `sup Psi` reached.
const PLATEAU_RTOL: f64 = 1e-12;
/// Quadrature tolerance for Psi and for `int delta`.
const QUAD_RTOL: f64 = 1e-10;

pub type ScalarFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// One instance of the differential inequality.
pub struct BoundProblem {
    /// Linear growth rate D >= 0.
    pub d: f64,
    /// Time weight delta(t) >= 0 on [0, t_end].
    pub delta: ScalarFn,
    /// Nonlinearity Phi(y) > 0, nondecreasing for y >= tau0.
    pub phi: ScalarFn,
    /// Initial value tau0 > 0.
    pub tau0: f64,
    /// Horizon T > 0.
    pub t_end: f64,
}

impl BoundProblem {
    pub fn new(d: f64, delta: ScalarFn, phi: ScalarFn, tau0: f64, t_end: f64) -> Result<Self> {
        if !(tau0 > 0.0) {
            return Err(Error::Config(format!("tau0 must be > 0, got {tau0}")));
        }
        if !(t_end > 0.0) {
            return Err(Error::Config(format!("t_end must be > 0, got {t_end}")));
        }
        if !(d >= 0.0) {
            return Err(Error::Config(format!("growth rate D must be >= 0, got {d}")));
        }
        Ok(BoundProblem { d, delta, phi, tau0, t_end })
    }
}

/// Threshold data computed once per problem.
#[derive(Debug, Clone, Copy)]
pub struct Threshold {
    /// Largest conductivity (with safety margin) for which a finite ceiling
    /// exists; infinite when sup Psi diverges or int delta = 0.
    pub kappa0: f64,
    /// sup of Psi built from the enlarged nonlinearity (f64::INFINITY when
    /// the integral of 1/Phi diverges).
    pub sup_psi: f64,
    pub int_delta: f64,
    /// e^{D T}, the linear-growth envelope factored out of the bound.
    pub envelope: f64,
}

fn simpson_segment(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    rtol: f64,
) -> Result<f64> {
    fn rec(
        f: &dyn Fn(f64) -> Result<f64>,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        eps: f64,
        depth: u32,
    ) -> Result<f64> {
        if depth > 50 {
            return Err(Error::QuadratureFailure(format!(
                "adaptive refinement exceeded depth 50 on [{a:.6e}, {b:.6e}]"
            )));
        }
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm)?;
        let frm = f(rm)?;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * eps {
            Ok(left + right + delta / 15.0)
        } else {
            Ok(rec(f, a, m, fa, flm, fm, left, 0.5 * eps, depth + 1)?
                + rec(f, m, b, fm, frm, fb, right, 0.5 * eps, depth + 1)?)
        }
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let fb = f(b)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let eps = rtol * whole.abs().max(1e-300);
    rec(f, a, b, fa, fm, fb, whole, eps, 0)
}

/// Wrap a nonlinearity into the Psi integrand 1/Phi with domain checks.
fn inv_phi<'a>(phi: &'a dyn Fn(f64) -> f64) -> impl Fn(f64) -> Result<f64> + 'a {
    move |s: f64| {
        let v = phi(s);
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::QuadratureFailure(format!(
                "nonlinearity must be positive and finite, got Phi({s:.6e}) = {v:.6e}"
            )));
        }
        Ok(1.0 / v)
    }
}

/// Psi(y) = int_{tau0}^{y} ds / Phi(s), evaluated by splitting the range at
/// geometric points tau0 * 2^k so huge upper limits stay well conditioned.
pub fn psi(phi: &dyn Fn(f64) -> f64, tau0: f64, y: f64) -> Result<f64> {
    if !(y >= tau0) {
        return Err(Error::Domain(format!(
            "Psi is defined for y >= tau0 = {tau0:.6e}, got {y:.6e}"
        )));
    }
    let integrand = inv_phi(phi);
    let mut acc = 0.0;
    let mut a = tau0;
    while a < y {
        let b = (2.0 * a).min(y);
        acc += simpson_segment(&integrand, a, b, QUAD_RTOL)?;
        a = b;
    }
    Ok(acc)
}

/// sup_{y >= tau0} Psi(y): climb the geometric ladder tau0 * 2^k until the
/// increment across a doubling drops below the plateau tolerance (finite
/// sup) or the ladder escapes to ~1e280 (divergent: returns infinity).
pub fn sup_psi(phi: &dyn Fn(f64) -> f64, tau0: f64) -> Result<f64> {
    let integrand = inv_phi(phi);
    let mut acc = 0.0;
    let mut a = tau0;
    loop {
        let b = 2.0 * a;
        if b > 1e280 {
            return Ok(f64::INFINITY);
        }
        let piece = simpson_segment(&integrand, a, b, QUAD_RTOL)?;
        acc += piece;
        if acc > 0.0 && piece < PLATEAU_RTOL * acc {
            return Ok(acc);
        }
        a = b;
    }
}

/// Compute the admissible threshold and the quantities needed for ceilings.
pub fn compute_threshold(p: &BoundProblem) -> Result<Threshold> {
    if p.d * p.t_end > 700.0 {
        return Err(Error::NotBoundable(format!(
            "growth envelope exp(D T) overflows: D T = {:.3e}",
            p.d * p.t_end
        )));
    }
    let envelope = (p.d * p.t_end).exp();
    let delta_checked = |t: f64| -> Result<f64> {
        let v = (p.delta)(t);
        if !v.is_finite() || v < 0.0 {
            return Err(Error::QuadratureFailure(format!(
                "time weight must be finite and >= 0, got delta({t:.6e}) = {v:.6e}"
            )));
        }
        Ok(v)
    };
    let int_delta = simpson_segment(&delta_checked, 0.0, p.t_end, QUAD_RTOL)?;
    let phi_env = |z: f64| (p.phi)(envelope * z);
    let sup = sup_psi(&phi_env, p.tau0)?;
    let kappa0 = if int_delta <= 0.0 || sup.is_infinite() {
        f64::INFINITY
    } else {
        sup * (1.0 - THRESHOLD_MARGIN) / int_delta
    };
    Ok(Threshold { kappa0, sup_psi: sup, int_delta, envelope })
}

/// A-priori ceiling tau_bar(kappa): the solution z of
/// Psi_env(z) = kappa int delta, scaled back by the growth envelope.
/// Fails with NotBoundable above the threshold.
pub fn tau_bar_at(p: &BoundProblem, th: &Threshold, kappa: f64) -> Result<f64> {
    if !(kappa >= 0.0) {
        return Err(Error::Config(format!("conductivity must be >= 0, got {kappa}")));
    }
    if kappa > th.kappa0 {
        return Err(Error::NotBoundable(format!(
            "conductivity {kappa:.6e} exceeds admissible threshold {:.6e}",
            th.kappa0
        )));
    }
    let target = kappa * th.int_delta;
    if target == 0.0 {
        return Ok(th.envelope * p.tau0);
    }
    let phi_env = |z: f64| (p.phi)(th.envelope * z);
    // Bracket: double until Psi crosses the target.
    let mut lo = p.tau0;
    let mut hi = 2.0 * p.tau0;
    while psi(&phi_env, p.tau0, hi)? < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e290 {
            return Err(Error::NotBoundable(format!(
                "no finite ceiling below 1e290 for conductivity {kappa:.6e}"
            )));
        }
    }
    // Bisection to 1e-10 relative width.
    for _ in 0..200 {
        if (hi - lo) <= 1e-10 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if psi(&phi_env, p.tau0, mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(th.envelope * 0.5 * (lo + hi))
}

/// Outcome of checking the ceiling against direct integration of the
/// comparison ODE (equality case of the inequality).
#[derive(Debug, Clone, Copy)]
pub struct VerifyRow {
    pub kappa: f64,
    /// Predicted ceiling; None when kappa is above the threshold.
    pub tau_bar: Option<f64>,
    /// sup of the numerically integrated tau over [0, T] (up to blow-up).
    pub sup_tau: f64,
    /// Finite-time escape of the ODE solution, if observed.
    pub blowup_time: Option<f64>,
    /// True when the claimed ceiling dominates the ODE solution (vacuously
    /// true when no ceiling is claimed).
    pub pass: bool,
}

/// Integrate tau' = D tau + kappa delta(t) Phi(tau) with an embedded
/// Cash-Karp 4(5) pair and compare the sup against the predicted ceiling.
pub fn verify_bound(p: &BoundProblem, th: &Threshold, kappa: f64) -> Result<VerifyRow> {
    let tau_bar = match tau_bar_at(p, th, kappa) {
        Ok(v) => Some(v),
        Err(Error::NotBoundable(_)) => None,
        Err(e) => return Err(e),
    };
    let rhs = |t: f64, tau: f64| p.d * tau + kappa * (p.delta)(t) * (p.phi)(tau);

    // Cash-Karp tableau.
    const A: [[f64; 5]; 5] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
        [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
        [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
        [
            1631.0 / 55296.0,
            175.0 / 512.0,
            575.0 / 13824.0,
            44275.0 / 110592.0,
            253.0 / 4096.0,
        ],
    ];
    const C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 3.0 / 5.0, 1.0, 7.0 / 8.0];
    const B5: [f64; 6] = [
        37.0 / 378.0,
        0.0,
        250.0 / 621.0,
        125.0 / 594.0,
        0.0,
        512.0 / 1771.0,
    ];
    const B4: [f64; 6] = [
        2825.0 / 27648.0,
        0.0,
        18575.0 / 48384.0,
        13525.0 / 55296.0,
        277.0 / 14336.0,
        1.0 / 4.0,
    ];

    let rtol = 1e-9;
    let atol = 1e-12;
    let mut t = 0.0;
    let mut tau = p.tau0;
    let mut sup_tau = tau;
    let mut h = p.t_end / 100.0;
    let mut blowup_time = None;
    'outer: while t < p.t_end {
        h = h.min(p.t_end - t);
        if h < 1e-13 * p.t_end {
            blowup_time = Some(t);
            break;
        }
        let mut k = [0.0f64; 6];
        k[0] = rhs(t, tau);
        for s in 1..6 {
            let mut y = tau;
            for (j, kj) in k.iter().enumerate().take(s) {
                y += h * A[s - 1][j] * kj;
            }
            if !y.is_finite() || y > 1e150 {
                blowup_time = Some(t);
                break 'outer;
            }
            k[s] = rhs(t + C[s] * h, y);
        }
        let mut y5 = tau;
        let mut y4 = tau;
        for s in 0..6 {
            y5 += h * B5[s] * k[s];
            y4 += h * B4[s] * k[s];
        }
        if !y5.is_finite() || y5 > 1e150 {
            blowup_time = Some(t);
            break;
        }
        let err = (y5 - y4).abs();
        let tol = atol + rtol * tau.abs().max(y5.abs());
        if err <= tol {
            t += h;
            tau = y5;
            sup_tau = sup_tau.max(tau);
        }
        let factor = if err > 0.0 {
            (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
    }
    let pass = match tau_bar {
        Some(tb) => blowup_time.is_none() && sup_tau <= tb * (1.0 + 1e-6),
        None => true,
    };
    Ok(VerifyRow { kappa, tau_bar, sup_tau, blowup_time, pass })
}

/// Pairing of the abstract lemma with a measured trajectory: the second
/// energy functional A2 plays tau, the temperature-gradient entropy weight
/// plays delta, and the nonlinearity is the growth envelope
/// c1 (theta0_max + c2 y)^2 exp(c3 sqrt(y)) built from measured state
/// ceilings. The growth rate D is measured from the trajectory (1.05 times
/// the largest observed logarithmic rate of A2), and the conductivity
/// enters quadratically (one power from delta's own kappa weight, one from
/// the conduction flux).
#[derive(Debug, Clone, Copy)]
pub struct PairingRecord {
    pub kappa: f64,
    pub kappa_eff: f64,
    pub d: f64,
    pub tau0: f64,
    pub int_delta: f64,
    pub kappa0: f64,
    pub tau_bar: f64,
    pub sup_a2: f64,
    /// 1 - sup A2 / tau_bar; positive when the ceiling holds with room.
    pub margin: f64,
    pub pass: bool,
}

pub fn pair_with_simulation(traj: &Trajectory, params: &GasParams) -> Result<PairingRecord> {
    let m = traj.snapshots.len();
    if m < 3 {
        return Err(Error::InsufficientSnapshots { needed: 3, got: m });
    }
    let grid = &traj.grid;
    let n = grid.n();
    let dx = grid.dx();
    let times = traj.times();
    let t_end = *times.last().unwrap();

    let hoff = diagnostics::hoff_energies(traj, params)?;
    let a2 = hoff.a2.clone();
    let sup_a2 = a2.iter().cloned().fold(0.0, f64::max);
    let tau0 = a2[0];
    if !(tau0 > 0.0) {
        return Err(Error::NotBoundable(
            "second energy functional vanishes at t = 0; nothing to bound".into(),
        ));
    }

    // Measured logarithmic growth rate of A2 (centered differences).
    let mut rate_max = 0.0f64;
    for k in 1..m - 1 {
        let da = (a2[k + 1] - a2[k - 1]) / (times[k + 1] - times[k - 1]);
        if a2[k] > 0.0 {
            rate_max = rate_max.max(da / a2[k]);
        }
    }
    let d = 1.05 * rate_max;

    // delta(t) = int (dx theta)^2 / theta^2 dX, piecewise linear in t.
    let mut delta_vals = Vec::with_capacity(m);
    for snap in &traj.snapshots {
        let dth = grid.deriv(&snap.theta);
        let mut acc = 0.0;
        for j in 0..n {
            let jac = snap.rho[j] / snap.rho0[j];
            acc += jac * dth[j] * dth[j] / (snap.theta[j] * snap.theta[j]);
        }
        delta_vals.push(acc * dx);
    }
    let times_cl = times.clone();
    let delta: ScalarFn = Box::new(move |t: f64| {
        if t <= times_cl[0] {
            return delta_vals[0];
        }
        if t >= *times_cl.last().unwrap() {
            return *delta_vals.last().unwrap();
        }
        let k = times_cl.partition_point(|&s| s <= t).min(times_cl.len() - 1);
        let (t0, t1) = (times_cl[k - 1], times_cl[k]);
        let w = (t - t0) / (t1 - t0);
        delta_vals[k - 1] * (1.0 - w) + delta_vals[k] * w
    });

    // Nonlinearity from measured ceilings.
    let bounds = diagnostics::bounds_report(traj);
    let rho_bar = bounds.global_rho_max;
    let theta0_bar = traj.snapshots[0]
        .theta
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    let gamma = params.gamma();
    let big_m = (rho_bar / params.mu).max(2.0);
    let c1 = 2.0 * (gamma - 1.0) * (gamma - 1.0) * rho_bar / params.mu;
    let c2 = big_m / (params.mu * rho_bar * params.cv);
    let c3 = 2.0 * params.r * (big_m * t_end).sqrt() / (params.mu * params.cv);
    let phi: ScalarFn = Box::new(move |y: f64| {
        let y = y.max(0.0);
        let base = theta0_bar + c2 * y;
        c1 * base * base * (c3 * y.sqrt()).exp()
    });

    let kappa_eff = params.kappa * params.kappa;
    let problem = BoundProblem::new(d, delta, phi, tau0, t_end)?;
    let th = compute_threshold(&problem)?;
    let tau_bar = tau_bar_at(&problem, &th, kappa_eff)?;
    let margin = 1.0 - sup_a2 / tau_bar;
    Ok(PairingRecord {
        kappa: params.kappa,
        kappa_eff,
        d,
        tau0,
        int_delta: th.int_delta,
        kappa0: th.kappa0,
        tau_bar,
        sup_a2,
        margin,
        pass: sup_a2 <= tau_bar * (1.0 + 1e-12),
    })
}
