//! Initial-data generators.
//!
//! Each generator produces `(rho0, u0, theta0)` on the cell centers of the
//! label grid. Generated data is validated against positivity and, when
//! stated, explicit lower/upper envelopes — generation fails loudly rather
//! than handing ill-posed data to the solver. The `sampled_jump` generator
//! is the deliberate exception: it produces discontinuous (ill-prepared)
//! density for the mollification studies.

use std::io::{BufRead, BufReader};

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// Spatially constant fields.
    Constant { rho: f64, u: f64, theta: f64 },
    /// rho = rho_mean + rho_amp sin(2 pi x), u = u_amp sin(2 pi x),
    /// theta constant — the smooth reference family.
    SineDensity {
        rho_mean: f64,
        rho_amp: f64,
        u_amp: f64,
        theta: f64,
    },
    /// All three fields sinusoidal with a shared phase shift.
    SineAll {
        rho_mean: f64,
        rho_amp: f64,
        u_amp: f64,
        theta_mean: f64,
        theta_amp: f64,
        phase: f64,
    },
    /// Piecewise-constant density sampled on the grid (discontinuities at
    /// x = 0 and x = jump_at); velocity and temperature constant.
    /// Deliberately ill-prepared.
    SampledJump {
        rho_left: f64,
        rho_right: f64,
        jump_at: f64,
        u: f64,
        theta: f64,
    },
    /// Read `rho u theta` triples, one whitespace-separated row per cell.
    File { path: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialDataSpec {
    pub generator: Generator,
    /// Optional stated envelope (rho_lower, rho_upper) to enforce.
    pub rho_bounds: Option<(f64, f64)>,
    /// Optional stated envelope (theta_lower, theta_upper) to enforce.
    pub theta_bounds: Option<(f64, f64)>,
    /// Subtract the mean velocity (mass-weighted) so total momentum is 0.
    pub normalize_momentum: bool,
}

impl InitialDataSpec {
    pub fn new(generator: Generator) -> Self {
        InitialDataSpec {
            generator,
            rho_bounds: None,
            theta_bounds: None,
            normalize_momentum: false,
        }
    }

    pub fn generate(&self, grid: &Grid) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let xs = grid.cell_centers();
        let n = grid.n();
        let tau = 2.0 * std::f64::consts::PI;
        let (rho, mut u, theta): (Vec<f64>, Vec<f64>, Vec<f64>) = match &self.generator {
            Generator::Constant { rho, u, theta } => {
                (vec![*rho; n], vec![*u; n], vec![*theta; n])
            }
            Generator::SineDensity {
                rho_mean,
                rho_amp,
                u_amp,
                theta,
            } => (
                xs.iter().map(|&x| rho_mean + rho_amp * (tau * x).sin()).collect(),
                xs.iter().map(|&x| u_amp * (tau * x).sin()).collect(),
                vec![*theta; n],
            ),
            Generator::SineAll {
                rho_mean,
                rho_amp,
                u_amp,
                theta_mean,
                theta_amp,
                phase,
            } => (
                xs.iter()
                    .map(|&x| rho_mean + rho_amp * (tau * x + phase).sin())
                    .collect(),
                xs.iter().map(|&x| u_amp * (tau * x + phase).sin()).collect(),
                xs.iter()
                    .map(|&x| theta_mean + theta_amp * (tau * x + phase).sin())
                    .collect(),
            ),
            Generator::SampledJump {
                rho_left,
                rho_right,
                jump_at,
                u,
                theta,
            } => {
                if !(*jump_at > 0.0 && *jump_at < 1.0) {
                    return Err(Error::Validation(format!(
                        "jump position must lie in (0,1), got {jump_at}"
                    )));
                }
                (
                    xs.iter()
                        .map(|&x| if x < *jump_at { *rho_left } else { *rho_right })
                        .collect(),
                    vec![*u; n],
                    vec![*theta; n],
                )
            }
            Generator::File { path } => read_data_file(path, n)?,
        };

        // Positivity, finiteness, and stated envelopes.
        for (name, f, bounds) in [
            ("rho0", &rho, self.rho_bounds),
            ("theta0", &theta, self.theta_bounds),
        ] {
            let lo = f.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(lo > 0.0) || !hi.is_finite() {
                return Err(Error::Validation(format!(
                    "initial {name} must be positive and finite (range [{lo:.6e}, {hi:.6e}])"
                )));
            }
            if let Some((blo, bhi)) = bounds {
                if !(blo > 0.0 && bhi >= blo) {
                    return Err(Error::Validation(format!(
                        "stated {name} envelope must satisfy 0 < lower <= upper, got [{blo}, {bhi}]"
                    )));
                }
                if lo < blo || hi > bhi {
                    return Err(Error::Validation(format!(
                        "initial {name} leaves the stated envelope [{blo:.6e}, {bhi:.6e}]: \
                         range [{lo:.6e}, {hi:.6e}]"
                    )));
                }
            }
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("initial u0 contains non-finite values".into()));
        }

        if self.normalize_momentum {
            let mass = grid.integral(&rho);
            let mom = grid.weighted_integral(&u, &rho);
            let shift = mom / mass;
            for v in &mut u {
                *v -= shift;
            }
        }
        Ok((rho, u, theta))
    }
}

fn read_data_file(path: &str, n: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let file = std::fs::File::open(path)?;
    let mut rho = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Format {
                    line: idx + 1,
                    msg: format!("expected a number, got {tok:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if vals.len() != 3 {
            return Err(Error::Format {
                line: idx + 1,
                msg: format!("expected 3 columns (rho u theta), got {}", vals.len()),
            });
        }
        rho.push(vals[0]);
        u.push(vals[1]);
        theta.push(vals[2]);
    }
    if rho.len() != n {
        return Err(Error::Format {
            line: 0,
            msg: format!("data file has {} rows, grid has {n} cells", rho.len()),
        });
    }
    Ok((rho, u, theta))
}
