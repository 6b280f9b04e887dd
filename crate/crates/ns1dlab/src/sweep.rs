//! Conductivity-limit sweeps, trajectory distances, and the initial-data
//! stability probe.
//!
//! All runs of a sweep share the solver configuration with a fixed step
//! size, so snapshot times coincide across conductivities and distances
//! can be evaluated snapshot-by-snapshot on the common label grid without
//! interpolation.

use crate::diagnostics::{
    self, BoundsReport, HoffFirst, HoffSecond, WeightedRegularity,
};
use crate::error::{Error, Result};
use crate::gas::GasParams;
use crate::grid::Grid;
use crate::mollify::{prepare_data, PreparedDataReport};
use crate::solver::{run, DtPolicy, SolverConfig, Trajectory};
use crate::state::LagState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceNorm {
    /// Space-time L2 of the density difference, Eulerian measure
    /// (symmetrized rho0/rho weight).
    L2L2Rho,
    /// Space-time L2 of the temperature difference, Eulerian measure.
    L2L2Theta,
    /// Space-time L2 of velocity difference plus its Eulerian gradient
    /// difference (H1 seminorm part), Eulerian measure.
    L2H1U,
    /// sup over time of the label-grid L2 distance of the composed fields
    /// (rho, theta, u, X) — the flow-composed stability metric, exact on
    /// the shared label grid.
    LagrangianComposed,
}

impl DistanceNorm {
    pub fn id(&self) -> &'static str {
        match self {
            DistanceNorm::L2L2Rho => "L2L2_rho",
            DistanceNorm::L2L2Theta => "L2L2_theta",
            DistanceNorm::L2H1U => "L2H1_u",
            DistanceNorm::LagrangianComposed => "lagrangian_composed",
        }
    }

    pub fn from_id(s: &str) -> Option<Self> {
        match s {
            "L2L2_rho" => Some(DistanceNorm::L2L2Rho),
            "L2L2_theta" => Some(DistanceNorm::L2L2Theta),
            "L2H1_u" => Some(DistanceNorm::L2H1U),
            "lagrangian_composed" => Some(DistanceNorm::LagrangianComposed),
            _ => None,
        }
    }
}

fn check_comparable(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.grid.n() != b.grid.n() {
        return Err(Error::GridMismatch(format!(
            "grids differ: {} vs {} cells",
            a.grid.n(),
            b.grid.n()
        )));
    }
    if a.snapshots.len() != b.snapshots.len() {
        return Err(Error::GridMismatch(format!(
            "snapshot counts differ: {} vs {}",
            a.snapshots.len(),
            b.snapshots.len()
        )));
    }
    for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
        if (sa.t - sb.t).abs() > 1e-12 * (1.0 + sa.t.abs()) {
            return Err(Error::GridMismatch(format!(
                "snapshot times differ: {} vs {}",
                sa.t, sb.t
            )));
        }
    }
    Ok(())
}

/// Distance between two trajectories on the same grid and snapshot times.
/// The Eulerian-measure norms use the symmetrized weight
/// (rho0_a/rho_a + rho0_b/rho_b)/2 so the distance is symmetric in its
/// arguments.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory, norm: DistanceNorm) -> Result<f64> {
    check_comparable(a, b)?;
    let grid = &a.grid;
    let n = grid.n();
    let dx = grid.dx();
    let times: Vec<f64> = a.times();
    match norm {
        DistanceNorm::LagrangianComposed => {
            let mut sup = 0.0f64;
            for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
                let mut acc = 0.0;
                for j in 0..n {
                    let dr = sa.rho[j] - sb.rho[j];
                    let dth = sa.theta[j] - sb.theta[j];
                    let du = sa.u[j] - sb.u[j];
                    let dxp = sa.x_pos[j] - sb.x_pos[j];
                    acc += dr * dr + dth * dth + du * du + dxp * dxp;
                }
                sup = sup.max(acc * dx);
            }
            Ok(sup.sqrt())
        }
        DistanceNorm::L2L2Rho | DistanceNorm::L2L2Theta => {
            let mut series = Vec::with_capacity(times.len());
            for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
                let (fa, fb) = match norm {
                    DistanceNorm::L2L2Rho => (&sa.rho, &sb.rho),
                    _ => (&sa.theta, &sb.theta),
                };
                let mut acc = 0.0;
                for j in 0..n {
                    let w = 0.5 * (sa.rho0[j] / sa.rho[j] + sb.rho0[j] / sb.rho[j]);
                    let d = fa[j] - fb[j];
                    acc += d * d * w;
                }
                series.push(acc * dx);
            }
            Ok(trapz(&times, &series).sqrt())
        }
        DistanceNorm::L2H1U => {
            let mut series = Vec::with_capacity(times.len());
            for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
                let dua = grid.deriv(&sa.u);
                let dub = grid.deriv(&sb.u);
                let mut acc = 0.0;
                for j in 0..n {
                    let w = 0.5 * (sa.rho0[j] / sa.rho[j] + sb.rho0[j] / sb.rho[j]);
                    let d = sa.u[j] - sb.u[j];
                    let dg = sa.rho[j] / sa.rho0[j] * dua[j] - sb.rho[j] / sb.rho0[j] * dub[j];
                    acc += (d * d + dg * dg) * w;
                }
                series.push(acc * dx);
            }
            Ok(trapz(&times, &series).sqrt())
        }
    }
}

fn trapz(times: &[f64], values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 1..values.len() {
        acc += 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
    }
    acc
}

/// Ordinary least-squares slope of y against x.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// How initial data is smoothed before the runs of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MollifyMode {
    /// Use the base data verbatim for all conductivities.
    None,
    /// Mollify the base once at a fixed width; all runs share the result.
    Fixed(f64),
    /// Conductivity-dependent widths (kappa^(1/4) for rho, theta;
    /// kappa^(1/2) for u); each run gets its own prepared data.
    PerKappa,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Strictly decreasing, last element 0.
    pub kappas: Vec<f64>,
    pub mollify: MollifyMode,
    pub distance_norms: Vec<DistanceNorm>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kappas.len() < 2 {
            return Err(Error::Config("sweep needs at least two kappa values".into()));
        }
        if *self.kappas.last().unwrap() != 0.0 {
            return Err(Error::Validation("kappas must end with 0".into()));
        }
        for w in self.kappas.windows(2) {
            if !(w[0] > w[1]) {
                return Err(Error::Validation("kappas must be strictly decreasing".into()));
            }
        }
        if self.kappas.iter().any(|&k| k < 0.0) {
            return Err(Error::Validation("kappas must be nonnegative".into()));
        }
        if self.distance_norms.is_empty() {
            return Err(Error::Config("sweep needs at least one distance norm".into()));
        }
        Ok(())
    }
}

/// One row of the sweep table.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub kappa: f64,
    /// Distances to the kappa = 0 run, aligned with config.distance_norms
    /// (all zero for the reference row itself).
    pub distances: Vec<f64>,
    pub prepared: Option<PreparedDataReport>,
    pub hoff1: HoffFirst,
    pub hoff2: HoffSecond,
    pub a2_sup: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub weighted: WeightedRegularity,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// OLS slope of log(distance) vs log(kappa) over the kappa > 0 rows,
    /// one entry per configured norm; None when degenerate.
    pub fitted_rates: Option<Vec<f64>>,
    /// All distances below 1e-14 (e.g. constant data): rate fit skipped.
    pub degenerate: bool,
    /// Per-norm flag: distances strictly decreasing along the kappa list.
    pub monotone: Vec<bool>,
    /// The trajectories, in kappa order (last = reference kappa 0).
    pub trajectories: Vec<Trajectory>,
}

/// Run the conductivity sweep: one run per kappa (concurrently), distances
/// against the kappa = 0 reference, per-run functional summaries, and a
/// log-log rate fit.
pub fn kappa_limit_study(
    base: (&[f64], &[f64], &[f64]),
    grid: &Grid,
    params_base: &GasParams,
    solver_cfg: &SolverConfig,
    sweep_cfg: &SweepConfig,
) -> Result<SweepOutcome> {
    sweep_cfg.validate()?;
    let mut solver_cfg = *solver_cfg;
    // Shared snapshot times across runs require a fixed step size.
    solver_cfg.dt_policy = DtPolicy::Fixed;

    // Prepare initial data per kappa.
    let fixed_base: Option<(Vec<f64>, Vec<f64>, Vec<f64>)> = match sweep_cfg.mollify {
        MollifyMode::Fixed(eta) => {
            let r = crate::mollify::mollify(base.0, grid, eta)?;
            let u = crate::mollify::mollify(base.1, grid, eta)?;
            let t = crate::mollify::mollify(base.2, grid, eta)?;
            Some((r, u, t))
        }
        _ => None,
    };
    let mut inputs = Vec::new();
    for &kappa in &sweep_cfg.kappas {
        let (data, prepared) = match sweep_cfg.mollify {
            MollifyMode::None => ((base.0.to_vec(), base.1.to_vec(), base.2.to_vec()), None),
            MollifyMode::Fixed(_) => (fixed_base.clone().unwrap(), None),
            MollifyMode::PerKappa => {
                let (r, u, t, rep) = prepare_data(base, grid, kappa)?;
                ((r, u, t), Some(rep))
            }
        };
        inputs.push((kappa, data, prepared));
    }

    // Independent runs, merged in kappa order.
    let mut results: Vec<Option<Result<Trajectory>>> = (0..inputs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (kappa, data, _) in &inputs {
            let solver_cfg = solver_cfg;
            handles.push(scope.spawn(move || -> Result<Trajectory> {
                let params = params_base.with_kappa(*kappa)?;
                let st = LagState::initial(grid, data.0.clone(), data.1.clone(), data.2.clone())?;
                run(st, grid, &params, &solver_cfg)
            }));
        }
        for (slot, h) in results.iter_mut().zip(handles) {
            *slot = Some(h.join().expect("sweep worker panicked"));
        }
    });
    let mut trajectories = Vec::new();
    for ((kappa, _, _), res) in inputs.iter().zip(results) {
        trajectories.push(res.unwrap().map_err(|e| {
            Error::Config(format!("run at kappa = {kappa:e} failed: {e}"))
        })?);
    }

    let reference = trajectories.last().unwrap().clone();
    let mut rows = Vec::new();
    for (idx, traj) in trajectories.iter().enumerate() {
        let kappa = sweep_cfg.kappas[idx];
        let params = params_base.with_kappa(kappa)?;
        let mut distances = Vec::new();
        for &norm in &sweep_cfg.distance_norms {
            distances.push(if idx + 1 == trajectories.len() {
                0.0
            } else {
                trajectory_distance(traj, &reference, norm)?
            });
        }
        let hoff = diagnostics::hoff_energies(traj, &params)?;
        let bounds: BoundsReport = diagnostics::bounds_report(traj);
        let weighted = diagnostics::weighted_regularity(traj, &params, diagnostics::DEFAULT_ALPHA)?;
        rows.push(SweepRow {
            kappa,
            distances,
            prepared: inputs[idx].2,
            hoff1: hoff.hoff1,
            hoff2: hoff.hoff2,
            a2_sup: hoff.a2.iter().cloned().fold(0.0, f64::max),
            rho_min: bounds.global_rho_min,
            rho_max: bounds.global_rho_max,
            theta_min: bounds.global_theta_min,
            theta_max: bounds.global_theta_max,
            weighted,
        });
    }

    let positive_rows: Vec<&SweepRow> = rows.iter().filter(|r| r.kappa > 0.0).collect();
    let degenerate = positive_rows
        .iter()
        .all(|r| r.distances.iter().all(|&d| d < 1e-14));
    let fitted_rates = if degenerate {
        None
    } else {
        let mut rates = Vec::new();
        for (ni, _) in sweep_cfg.distance_norms.iter().enumerate() {
            let xs: Vec<f64> = positive_rows.iter().map(|r| r.kappa.ln()).collect();
            let ys: Vec<f64> = positive_rows
                .iter()
                .map(|r| r.distances[ni].max(1e-300).ln())
                .collect();
            rates.push(ols_slope(&xs, &ys));
        }
        Some(rates)
    };
    let monotone = sweep_cfg
        .distance_norms
        .iter()
        .enumerate()
        .map(|(ni, _)| {
            positive_rows
                .windows(2)
                .all(|w| w[0].distances[ni] > w[1].distances[ni])
        })
        .collect();

    Ok(SweepOutcome {
        rows,
        fitted_rates,
        degenerate,
        monotone,
        trajectories,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbField {
    Rho,
    U,
}

#[derive(Debug, Clone)]
pub struct StabilityOutcome {
    pub sizes: Vec<f64>,
    pub distances: Vec<f64>,
    /// OLS slope of log(distance) vs log(size).
    pub exponent: f64,
}

/// Smooth bump supported in (0.3, 0.7), max value 1, used as the
/// perturbation profile.
pub fn perturbation_bump(grid: &Grid) -> Vec<f64> {
    grid.cell_centers()
        .iter()
        .map(|&x| {
            let z = (x - 0.5) / 0.2;
            if z.abs() >= 1.0 {
                0.0
            } else {
                (1.0 - 1.0 / (1.0 - z * z)).exp()
            }
        })
        .collect()
}

/// Perturb one initial field by eps * bump for each eps, run base and
/// perturbed trajectories, record the flow-composed distance and fit the
/// distance-vs-size exponent.
pub fn stability_probe(
    base: (&[f64], &[f64], &[f64]),
    grid: &Grid,
    params: &GasParams,
    solver_cfg: &SolverConfig,
    sizes: &[f64],
    field: PerturbField,
) -> Result<StabilityOutcome> {
    if sizes.is_empty() || sizes.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Config("perturbation sizes must be positive".into()));
    }
    let mut solver_cfg = *solver_cfg;
    solver_cfg.dt_policy = DtPolicy::Fixed;
    let bump = perturbation_bump(grid);
    let base_state = LagState::initial(grid, base.0.to_vec(), base.1.to_vec(), base.2.to_vec())?;
    let base_traj = run(base_state, grid, params, &solver_cfg)?;
    let mut distances = Vec::new();
    for &eps in sizes {
        let mut rho = base.0.to_vec();
        let mut u = base.1.to_vec();
        match field {
            PerturbField::Rho => {
                for (r, b) in rho.iter_mut().zip(&bump) {
                    *r += eps * b;
                }
            }
            PerturbField::U => {
                for (v, b) in u.iter_mut().zip(&bump) {
                    *v += eps * b;
                }
            }
        }
        let st = LagState::initial(grid, rho, u, base.2.to_vec())?;
        let traj = run(st, grid, params, &solver_cfg)?;
        distances.push(trajectory_distance(&traj, &base_traj, DistanceNorm::LagrangianComposed)?);
    }
    let xs: Vec<f64> = sizes.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = distances.iter().map(|d| d.max(1e-300).ln()).collect();
    let exponent = ols_slope(&xs, &ys);
    Ok(StabilityOutcome {
        sizes: sizes.to_vec(),
        distances,
        exponent,
    })
}
