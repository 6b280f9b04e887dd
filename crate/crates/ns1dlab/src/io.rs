//! Persistence: trajectory files, CSV reports, run manifests, and plot
//! scripts.
//!
//! All floating-point output uses Rust's shortest round-trip formatting, so
//! write-then-read restores every bit and repeated runs of a deterministic
//! pipeline produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::diagnostics::DiagnosticsReport;
use crate::error::{Error, Result};
use crate::gas::GasParams;
use crate::grid::Grid;
use crate::lemma17::{PairingRecord, Threshold, VerifyRow};
use crate::solver::{DtPolicy, SchemeOrder, SolverConfig, Trajectory};
use crate::state::LagState;
use crate::sweep::{StabilityOutcome, SweepConfig, SweepOutcome};

const TRAJECTORY_MAGIC: &str = "ns1dlab trajectory v1";

/// Shortest decimal representation that round-trips the exact f64.
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::Format {
        line,
        msg: format!("expected a number, got {tok:?}"),
    })
}

// ---------------------------------------------------------------------------
// Trajectory files
// ---------------------------------------------------------------------------

pub fn trajectory_to_string(traj: &Trajectory) -> String {
    let mut out = String::new();
    let p = &traj.params;
    let c = &traj.config;
    out.push_str(TRAJECTORY_MAGIC);
    out.push('\n');
    let _ = writeln!(out, "n {}", traj.grid.n());
    let _ = writeln!(out, "snapshots {}", traj.snapshots.len());
    let _ = writeln!(
        out,
        "gas {} {} {} {}",
        format_f64(p.mu),
        format_f64(p.r),
        format_f64(p.cv),
        format_f64(p.kappa)
    );
    let _ = writeln!(
        out,
        "solver {} {} {} {} {} {}",
        format_f64(c.dt_initial),
        format_f64(c.t_end),
        format_f64(c.cfl_safety),
        c.snapshot_every,
        match c.scheme_order {
            SchemeOrder::First => 1,
            SchemeOrder::Second => 2,
        },
        match c.dt_policy {
            DtPolicy::Adaptive => "adaptive",
            DtPolicy::Fixed => "fixed",
        }
    );
    let write_row = |out: &mut String, tag: &str, vals: &[f64]| {
        out.push_str(tag);
        for v in vals {
            out.push(' ');
            out.push_str(&format_f64(*v));
        }
        out.push('\n');
    };
    write_row(&mut out, "dt_history", &traj.dt_history);
    write_row(&mut out, "rho0", &traj.snapshots[0].rho0);
    for snap in &traj.snapshots {
        let _ = writeln!(out, "t {}", format_f64(snap.t));
        write_row(&mut out, "rho", &snap.rho);
        write_row(&mut out, "u", &snap.u);
        write_row(&mut out, "theta", &snap.theta);
        write_row(&mut out, "x", &snap.x_pos);
    }
    out
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    std::fs::write(path, trajectory_to_string(traj))?;
    Ok(())
}

pub fn trajectory_from_string(text: &str) -> Result<Trajectory> {
    let mut lines = text.lines().enumerate();
    {
        let (idx, line) = lines.next().ok_or(Error::Format {
            line: 0,
            msg: "empty file".into(),
        })?;
        if line != TRAJECTORY_MAGIC {
            return Err(Error::Format {
                line: idx + 1,
                msg: format!("bad magic line, expected {TRAJECTORY_MAGIC:?}"),
            });
        }
    }
    let mut next = |tag: &str| -> Result<(usize, Vec<&str>)> {
        let (idx, line) = lines.next().ok_or(Error::Format {
            line: 0,
            msg: format!("unexpected end of file, expected {tag:?} row"),
        })?;
        let line_no = idx + 1;
        let mut toks = line.split_whitespace();
        let head = toks.next().unwrap_or("");
        if head != tag {
            return Err(Error::Format {
                line: line_no,
                msg: format!("expected {tag:?} row, got {head:?}"),
            });
        }
        Ok((line_no, toks.collect()))
    };

    let (ln, toks) = next("n")?;
    if toks.len() != 1 {
        return Err(Error::Format { line: ln, msg: "n row needs one value".into() });
    }
    let n: usize = toks[0].parse().map_err(|_| Error::Format {
        line: ln,
        msg: format!("bad cell count {:?}", toks[0]),
    })?;
    let grid = Grid::new(n)?;

    let (ln, toks) = next("snapshots")?;
    let m: usize = toks
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or(Error::Format { line: ln, msg: "bad snapshot count".into() })?;

    let (ln, toks) = next("gas")?;
    if toks.len() != 4 {
        return Err(Error::Format { line: ln, msg: "gas row needs 4 values".into() });
    }
    let params = GasParams::new(
        parse_f64(toks[0], ln)?,
        parse_f64(toks[1], ln)?,
        parse_f64(toks[2], ln)?,
        parse_f64(toks[3], ln)?,
    )?;

    let (ln, toks) = next("solver")?;
    if toks.len() != 6 {
        return Err(Error::Format { line: ln, msg: "solver row needs 6 values".into() });
    }
    let config = SolverConfig {
        dt_initial: parse_f64(toks[0], ln)?,
        t_end: parse_f64(toks[1], ln)?,
        cfl_safety: parse_f64(toks[2], ln)?,
        snapshot_every: toks[3].parse().map_err(|_| Error::Format {
            line: ln,
            msg: format!("bad snapshot cadence {:?}", toks[3]),
        })?,
        scheme_order: match toks[4] {
            "1" => SchemeOrder::First,
            "2" => SchemeOrder::Second,
            other => {
                return Err(Error::Format {
                    line: ln,
                    msg: format!("bad scheme order {other:?}"),
                })
            }
        },
        dt_policy: match toks[5] {
            "adaptive" => DtPolicy::Adaptive,
            "fixed" => DtPolicy::Fixed,
            other => {
                return Err(Error::Format {
                    line: ln,
                    msg: format!("bad dt policy {other:?}"),
                })
            }
        },
    };

    let parse_row = |ln: usize, toks: &[&str], expect: usize| -> Result<Vec<f64>> {
        if toks.len() != expect {
            return Err(Error::Format {
                line: ln,
                msg: format!("expected {expect} values, got {}", toks.len()),
            });
        }
        toks.iter().map(|t| parse_f64(t, ln)).collect()
    };

    let (ln, toks) = next("dt_history")?;
    let dt_history = toks
        .iter()
        .map(|t| parse_f64(t, ln))
        .collect::<Result<Vec<f64>>>()?;
    let (ln, toks) = next("rho0")?;
    let rho0 = parse_row(ln, &toks, n)?;

    let mut snapshots = Vec::with_capacity(m);
    for _ in 0..m {
        let (ln, toks) = next("t")?;
        if toks.len() != 1 {
            return Err(Error::Format { line: ln, msg: "t row needs one value".into() });
        }
        let t = parse_f64(toks[0], ln)?;
        let (ln, toks) = next("rho")?;
        let rho = parse_row(ln, &toks, n)?;
        let (ln, toks) = next("u")?;
        let u = parse_row(ln, &toks, n)?;
        let (ln, toks) = next("theta")?;
        let theta = parse_row(ln, &toks, n)?;
        let (ln, toks) = next("x")?;
        let x_pos = parse_row(ln, &toks, n)?;
        snapshots.push(LagState { t, rho, u, theta, x_pos, rho0: rho0.clone() });
    }
    if snapshots.len() != m {
        return Err(Error::Format {
            line: 0,
            msg: format!("header promised {m} snapshots, found {}", snapshots.len()),
        });
    }
    Ok(Trajectory { grid, params, config, snapshots, dt_history })
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    trajectory_from_string(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

pub fn csv_string(header: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn owned(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Per-snapshot time series of a single run.
pub fn run_timeseries_csv(report: &DiagnosticsReport) -> String {
    let header = owned(&[
        "t",
        "mass",
        "energy",
        "momentum",
        "rho_min",
        "rho_max",
        "theta_min",
        "theta_max",
        "entropy",
        "entropy_production_cum",
        "pressure_int",
        "kinetic_int",
        "a1",
        "a2",
    ]);
    let m = report.conserved.times.len();
    let mut rows = Vec::with_capacity(m);
    for k in 0..m {
        rows.push(vec![
            report.conserved.times[k],
            report.conserved.mass[k],
            report.conserved.energy[k],
            report.conserved.momentum[k],
            report.bounds.rho_min[k],
            report.bounds.rho_max[k],
            report.bounds.theta_min[k],
            report.bounds.theta_max[k],
            report.entropy.entropy[k],
            report.entropy.production_cum[k],
            report.pressure_int[k],
            report.kinetic_int[k],
            report.hoff.a1[k],
            report.hoff.a2[k],
        ]);
    }
    csv_string(&header, &rows)
}

/// Interior-time residual series of a single run.
pub fn run_residuals_csv(report: &DiagnosticsReport) -> String {
    let header = owned(&[
        "t",
        "entropy_residual",
        "sigma_pde_residual",
        "pgamma_identity_residual",
    ]);
    let m = report.sigma_residual_times.len();
    let mut rows = Vec::with_capacity(m);
    for k in 0..m {
        rows.push(vec![
            report.sigma_residual_times[k],
            report.entropy.residual[k],
            report.sigma_residual[k],
            report.pgamma_residual[k],
        ]);
    }
    csv_string(&header, &rows)
}

/// One-row scalar summary of a single run.
pub fn run_summary_csv(report: &DiagnosticsReport) -> String {
    let mut header = owned(&["mass_drift", "energy_drift", "momentum_drift"]);
    let mut row = vec![
        report.conserved.mass_drift,
        report.conserved.energy_drift,
        report.conserved.momentum_drift,
    ];
    for (name, v) in report.hoff.hoff1.terms() {
        header.push(name.to_string());
        row.push(v);
    }
    for (name, v) in report.hoff.hoff2.terms() {
        header.push(name.to_string());
        row.push(v);
    }
    let w = &report.weighted;
    for (name, v) in [
        ("weighted.sup_kalpha_int_dxtheta_sq", w.sup_kalpha_int_dxtheta_sq),
        ("weighted.sup_kalpha_int_dxrho_sq", w.sup_kalpha_int_dxrho_sq),
        ("weighted.kalpham1_int_int_dxkdxtheta_sq", w.kalpham1_int_int_dxkdxtheta_sq),
        ("weighted.sup_kappa_int_dxtheta_sq", w.sup_kappa_int_dxtheta_sq),
        ("weighted.sup_kappa_sup_dxrho_sq", w.sup_kappa_sup_dxrho_sq),
        ("weighted.sup_kappa_sup_dxtheta_sq", w.sup_kappa_sup_dxtheta_sq),
    ] {
        header.push(name.to_string());
        row.push(v);
    }
    header.push("dtinv_sigma_max".into());
    header.push("dtinv_sigma_bound".into());
    match &report.dtinv_sigma {
        Some(c) => {
            row.push(c.max_abs);
            row.push(c.bound);
        }
        None => {
            row.push(f64::NAN);
            row.push(f64::NAN);
        }
    }
    header.push("torus_length_dev".into());
    row.push(report.torus_length_dev);
    csv_string(&header, &[row])
}

/// Sweep table: one row per conductivity, distances first, then the
/// functional summaries and (when available) the comparison-lemma pairing.
pub fn sweep_csv(
    cfg: &SweepConfig,
    outcome: &SweepOutcome,
    pairings: &[PairingRecord],
) -> String {
    let mut header = vec!["kappa".to_string()];
    for norm in &cfg.distance_norms {
        header.push(format!("dist_{}", norm.id()));
    }
    header.extend(owned(&[
        "a2_sup",
        "rho_min",
        "rho_max",
        "theta_min",
        "theta_max",
    ]));
    if let Some(first) = outcome.rows.first() {
        for (name, _) in first.hoff1.terms() {
            header.push(name.to_string());
        }
        for (name, _) in first.hoff2.terms() {
            header.push(name.to_string());
        }
    }
    header.extend(owned(&[
        "weighted.sup_kalpha_int_dxtheta_sq",
        "weighted.sup_kalpha_int_dxrho_sq",
        "weighted.kalpham1_int_int_dxkdxtheta_sq",
        "weighted.sup_kappa_int_dxtheta_sq",
        "weighted.sup_kappa_sup_dxrho_sq",
        "weighted.sup_kappa_sup_dxtheta_sq",
    ]));
    let with_pairing = pairings.len() == outcome.rows.len();
    if with_pairing {
        header.extend(owned(&["pairing.tau_bar", "pairing.sup_a2", "pairing.margin"]));
    }
    let mut rows = Vec::new();
    for (idx, r) in outcome.rows.iter().enumerate() {
        let mut row = vec![r.kappa];
        row.extend_from_slice(&r.distances);
        row.extend_from_slice(&[r.a2_sup, r.rho_min, r.rho_max, r.theta_min, r.theta_max]);
        for (_, v) in r.hoff1.terms() {
            row.push(v);
        }
        for (_, v) in r.hoff2.terms() {
            row.push(v);
        }
        let w = &r.weighted;
        row.extend_from_slice(&[
            w.sup_kalpha_int_dxtheta_sq,
            w.sup_kalpha_int_dxrho_sq,
            w.kalpham1_int_int_dxkdxtheta_sq,
            w.sup_kappa_int_dxtheta_sq,
            w.sup_kappa_sup_dxrho_sq,
            w.sup_kappa_sup_dxtheta_sq,
        ]);
        if with_pairing {
            let p = &pairings[idx];
            row.extend_from_slice(&[p.tau_bar, p.sup_a2, p.margin]);
        }
        rows.push(row);
    }
    let mut out = csv_string(&header, &rows);
    if let Some(rates) = &outcome.fitted_rates {
        let cells: Vec<String> = rates.iter().map(|&r| format_f64(r)).collect();
        out.push_str(&format!("# fitted_rate,{}\n", cells.join(",")));
    } else {
        out.push_str("# fitted_rate,degenerate\n");
    }
    out
}

pub fn lemma_csv(threshold: &Threshold, rows: &[VerifyRow]) -> String {
    let header = owned(&["kappa", "tau_bar", "sup_tau", "blowup_time", "pass"]);
    let data: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            vec![
                r.kappa,
                r.tau_bar.unwrap_or(f64::NAN),
                r.sup_tau,
                r.blowup_time.unwrap_or(f64::NAN),
                if r.pass { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    let mut out = format!(
        "# kappa0,{} sup_psi,{} int_delta,{}\n",
        format_f64(threshold.kappa0),
        format_f64(threshold.sup_psi),
        format_f64(threshold.int_delta)
    );
    out.push_str(&csv_string(&header, &data));
    out
}

pub fn stability_csv(outcome: &StabilityOutcome) -> String {
    let header = owned(&["perturbation_size", "distance"]);
    let rows: Vec<Vec<f64>> = outcome
        .sizes
        .iter()
        .zip(&outcome.distances)
        .map(|(&e, &d)| vec![e, d])
        .collect();
    let mut out = csv_string(&header, &rows);
    out.push_str(&format!("# fitted_exponent,{}\n", format_f64(outcome.exponent)));
    out
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// FNV-1a over the raw bytes; stable across platforms and runs.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_text: String,
    pub wall_clock_secs: f64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn to_string_pretty(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "tool_version {}", self.tool_version);
        let _ = writeln!(out, "config_hash {:016x}", fnv1a(self.config_text.as_bytes()));
        let _ = writeln!(out, "wall_clock_secs {}", format_f64(self.wall_clock_secs));
        for f in &self.outputs {
            let _ = writeln!(out, "output {f}");
        }
        out.push_str("config_echo_begin\n");
        out.push_str(&self.config_text);
        if !self.config_text.ends_with('\n') && !self.config_text.is_empty() {
            out.push('\n');
        }
        out.push_str("config_echo_end\n");
        out
    }
}

// ---------------------------------------------------------------------------
// Plot-script emission
// ---------------------------------------------------------------------------

/// A self-contained matplotlib script with the CSV inlined; no plotting is
/// performed by this crate. Empty tables produce an explanatory comment and
/// no plot commands.
pub fn emit_plot_script(title: &str, csv_text: &str, xlog: bool, ylog: bool) -> String {
    let data_rows = csv_text
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .count();
    if data_rows == 0 {
        return format!("# {title}: empty table, nothing to plot\n");
    }
    let mut out = String::new();
    let _ = writeln!(out, "# {title}");
    out.push_str("import csv, io\nimport matplotlib.pyplot as plt\n\nDATA = \"\"\"\\\n");
    for line in csv_text.lines() {
        if line.starts_with('#') {
            continue;
        }
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("\"\"\"\n\n");
    out.push_str(
        "rows = list(csv.DictReader(io.StringIO(DATA)))\n\
         cols = rows[0].keys()\n\
         xkey = list(cols)[0]\n\
         x = [float(r[xkey]) for r in rows]\n\
         fig, ax = plt.subplots()\n\
         for key in cols:\n\
         \x20\x20\x20\x20if key == xkey:\n\
         \x20\x20\x20\x20\x20\x20\x20\x20continue\n\
         \x20\x20\x20\x20y = [float(r[key]) for r in rows]\n\
         \x20\x20\x20\x20ax.plot(x, y, marker='o', label=key)\n",
    );
    if xlog {
        out.push_str("ax.set_xscale('log')\n");
    }
    if ylog {
        out.push_str("ax.set_yscale('log')\n");
    }
    let _ = writeln!(out, "ax.set_xlabel(xkey)");
    let _ = writeln!(out, "ax.set_title({title:?})");
    out.push_str("ax.legend(fontsize=6)\nfig.tight_layout()\n");
    let _ = writeln!(out, "fig.savefig({:?}, dpi=150)", format!("{title}.png"));
    out
}
