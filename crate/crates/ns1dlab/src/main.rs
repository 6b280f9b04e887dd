//! Command-line entry points: `run`, `sweep`, `lemma17`, `verify`.
//!
//! Exit codes: 0 success, 1 domain failure (numerical breakdown or a failed
//! verification), 2 usage error (bad arguments, unreadable or invalid
//! files). The output directory is the current directory unless overridden
//! by `--out` or the `NS1DLAB_OUT_DIR` environment variable (the
//! environment wins).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use ns1dlab::config::FullConfig;
use ns1dlab::diagnostics;
use ns1dlab::error::Error;
use ns1dlab::io;
use ns1dlab::lemma17::{self, BoundProblem, PairingRecord};
use ns1dlab::solver::{self, flow_map_consistency};
use ns1dlab::state::LagState;
use ns1dlab::sweep::{kappa_limit_study, stability_probe};

#[derive(Parser)]
#[command(name = "ns1dlab", version, about = "1D Lagrangian gas-dynamics laboratory")]
struct Cli {
    /// Output directory for CSVs, trajectories, scripts, and manifests.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and emit the full diagnostics report.
    Run { config: PathBuf },
    /// Run the conductivity-limit sweep (and stability probe if configured).
    Sweep { config: PathBuf },
    /// Compute the comparison-lemma threshold and verify the ceiling.
    Lemma17 { config: PathBuf },
    /// Re-check a stored trajectory against a thresholds file.
    Verify { trajectory: PathBuf, thresholds: PathBuf },
}

/// Usage-class errors exit 2; everything else (numerical/domain) exits 1.
fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::Parse { .. }
        | Error::Format { .. }
        | Error::Config(_)
        | Error::Validation(_)
        | Error::Io(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn out_dir(cli_out: &Path) -> PathBuf {
    match std::env::var_os("NS1DLAB_OUT_DIR") {
        Some(dir) => PathBuf::from(dir),
        None => cli_out.to_path_buf(),
    }
}

fn write_out(dir: &Path, name: &str, content: &str) -> ns1dlab::Result<String> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), content)?;
    Ok(name.to_string())
}

fn finish_manifest(
    dir: &Path,
    config_text: &str,
    outputs: Vec<String>,
    started: Instant,
) -> ns1dlab::Result<()> {
    let manifest = io::RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_text: config_text.to_string(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        outputs,
    };
    write_out(dir, "manifest.txt", &manifest.to_string_pretty())?;
    Ok(())
}

fn cmd_run(config_path: &Path, dir: &Path) -> ns1dlab::Result<()> {
    let started = Instant::now();
    let config_text = std::fs::read_to_string(config_path)?;
    let cfg: FullConfig = ns1dlab::config::parse_config_str(&config_text)?;
    let (rho0, u0, theta0) = cfg.initial.generate(&cfg.grid)?;
    let state = LagState::initial(&cfg.grid, rho0, u0, theta0)?;
    let traj = solver::run(state, &cfg.grid, &cfg.gas, &cfg.solver)?;
    let report = diagnostics::report(&traj, &cfg.gas)?;

    let mut outputs = Vec::new();
    outputs.push(write_out(dir, "trajectory.txt", &io::trajectory_to_string(&traj))?);
    let ts = io::run_timeseries_csv(&report);
    outputs.push(write_out(dir, "run_timeseries.csv", &ts)?);
    outputs.push(write_out(dir, "run_residuals.csv", &io::run_residuals_csv(&report))?);
    outputs.push(write_out(dir, "run_summary.csv", &io::run_summary_csv(&report))?);
    outputs.push(write_out(
        dir,
        "plot_run_timeseries.py",
        &io::emit_plot_script("run_timeseries", &ts, false, false),
    )?);
    finish_manifest(dir, &config_text, outputs, started)?;
    println!(
        "run complete: t_end = {}, {} snapshots, flow-map residual {:.3e}",
        traj.config.t_end,
        traj.snapshots.len(),
        flow_map_consistency(&traj)
    );
    Ok(())
}

fn cmd_sweep(config_path: &Path, dir: &Path) -> ns1dlab::Result<()> {
    let started = Instant::now();
    let config_text = std::fs::read_to_string(config_path)?;
    let cfg: FullConfig = ns1dlab::config::parse_config_str(&config_text)?;
    let section = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep command needs a [sweep] section".into()))?;
    let (rho0, u0, theta0) = cfg.initial.generate(&cfg.grid)?;
    let base = (rho0.as_slice(), u0.as_slice(), theta0.as_slice());

    let outcome = kappa_limit_study(base, &cfg.grid, &cfg.gas, &cfg.solver, &section.config)?;
    let pairings: Vec<PairingRecord> = outcome
        .trajectories
        .iter()
        .zip(&section.config.kappas)
        .map(|(traj, &kappa)| {
            lemma17::pair_with_simulation(traj, &cfg.gas.with_kappa(kappa)?)
        })
        .collect::<ns1dlab::Result<_>>()?;

    let mut outputs = Vec::new();
    let table = io::sweep_csv(&section.config, &outcome, &pairings);
    outputs.push(write_out(dir, "sweep.csv", &table)?);
    outputs.push(write_out(
        dir,
        "plot_sweep.py",
        &io::emit_plot_script("sweep", &table, true, true),
    )?);

    if let Some((field, sizes)) = &section.stability {
        let probe = stability_probe(base, &cfg.grid, &cfg.gas, &cfg.solver, sizes, *field)?;
        let csv = io::stability_csv(&probe);
        outputs.push(write_out(dir, "stability.csv", &csv)?);
        outputs.push(write_out(
            dir,
            "plot_stability.py",
            &io::emit_plot_script("stability", &csv, true, true),
        )?);
    }
    finish_manifest(dir, &config_text, outputs, started)?;
    match &outcome.fitted_rates {
        Some(rates) => println!(
            "sweep complete: {} runs, fitted rates {:?}, monotone {:?}",
            outcome.rows.len(),
            rates,
            outcome.monotone
        ),
        None => println!("sweep complete: {} runs, degenerate (zero distances)", outcome.rows.len()),
    }
    Ok(())
}

fn cmd_lemma17(config_path: &Path, dir: &Path) -> ns1dlab::Result<()> {
    let started = Instant::now();
    let config_text = std::fs::read_to_string(config_path)?;
    let cfg: FullConfig = ns1dlab::config::parse_config_str(&config_text)?;
    let section = cfg
        .lemma17
        .as_ref()
        .ok_or_else(|| Error::Config("lemma17 command needs a [lemma17] section".into()))?;
    let problem = BoundProblem::new(
        section.d,
        section.delta.build(),
        section.phi.build(),
        section.tau0,
        section.t_end,
    )?;
    let threshold = lemma17::compute_threshold(&problem)?;
    let rows: Vec<lemma17::VerifyRow> = section
        .kappas
        .iter()
        .map(|&k| lemma17::verify_bound(&problem, &threshold, k))
        .collect::<ns1dlab::Result<_>>()?;

    let table = io::lemma_csv(&threshold, &rows);
    let outputs = vec![write_out(dir, "lemma17.csv", &table)?];
    finish_manifest(dir, &config_text, outputs, started)?;
    println!(
        "lemma17 complete: kappa0 = {}, {} verification rows, all pass: {}",
        io::format_f64(threshold.kappa0),
        rows.len(),
        rows.iter().all(|r| r.pass)
    );
    if rows.iter().all(|r| r.pass) {
        Ok(())
    } else {
        Err(Error::NotBoundable("a claimed ceiling was violated by the comparison ODE".into()))
    }
}

/// Thresholds file: `key = value` lines, keys below. Any omitted check is
/// skipped.
const VERIFY_KEYS: [&str; 6] = [
    "max_mass_drift",
    "max_energy_drift",
    "max_momentum_drift",
    "max_sigma_residual",
    "max_pgamma_residual",
    "max_flow_map_residual",
];

fn cmd_verify(traj_path: &Path, thresholds_path: &Path) -> ns1dlab::Result<()> {
    let traj = io::read_trajectory(traj_path)?;
    for (idx, snap) in traj.snapshots.iter().enumerate() {
        snap.validate(&traj.grid).map_err(|e| {
            Error::Validation(format!("snapshot {idx} fails state validation: {e}"))
        })?;
    }
    let mut thresholds = Vec::new();
    for (idx, raw) in std::fs::read_to_string(thresholds_path)?.lines().enumerate() {
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            });
        };
        let key = key.trim().to_string();
        if !VERIFY_KEYS.contains(&key.as_str()) {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("unknown threshold key {key:?}"),
            });
        }
        let value: f64 = value.trim().parse().map_err(|_| Error::Parse {
            line: idx + 1,
            msg: format!("threshold for {key} must be a number"),
        })?;
        thresholds.push((key, value));
    }

    let report = diagnostics::report(&traj, &traj.params)?;
    let sup = |v: &[f64]| v.iter().cloned().fold(0.0f64, f64::max);
    let mut failures = Vec::new();
    for (key, limit) in &thresholds {
        let measured = match key.as_str() {
            "max_mass_drift" => report.conserved.mass_drift,
            "max_energy_drift" => report.conserved.energy_drift,
            "max_momentum_drift" => report.conserved.momentum_drift,
            "max_sigma_residual" => sup(&report.sigma_residual),
            "max_pgamma_residual" => sup(&report.pgamma_residual),
            "max_flow_map_residual" => flow_map_consistency(&traj),
            _ => unreachable!(),
        };
        let ok = measured <= *limit;
        println!(
            "{}: measured {} vs limit {} -> {}",
            key,
            io::format_f64(measured),
            io::format_f64(*limit),
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failures.push(key.clone());
        }
    }
    if failures.is_empty() {
        println!("verify: all {} checks passed", thresholds.len());
        Ok(())
    } else {
        Err(Error::NotBoundable(format!("verification failed: {}", failures.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let dir = out_dir(&cli.out);
    let result = match &cli.command {
        Command::Run { config } => cmd_run(config, &dir),
        Command::Sweep { config } => cmd_sweep(config, &dir),
        Command::Lemma17 { config } => cmd_lemma17(config, &dir),
        Command::Verify { trajectory, thresholds } => cmd_verify(trajectory, thresholds),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
