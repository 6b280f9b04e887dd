//! Strict line-oriented configuration parsing.
//!
//! Format: `[section]` headers followed by `key = value` lines; `#` starts
//! a comment; blank lines ignored. Sections: `[gas]`, `[grid]`, `[solver]`,
//! `[initial]`, `[sweep]`, `[lemma17]`. Unknown sections, unknown keys, and
//! duplicate keys are hard errors with line numbers — silent typos in a
//! conductivity list would invalidate an entire study. Every omitted key
//! falls back to a documented default, so the empty file is a valid
//! configuration (constant data, zero conductivity).

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gas::GasParams;
use crate::grid::Grid;
use crate::initial::{Generator, InitialDataSpec};
use crate::lemma17::ScalarFn;
use crate::solver::{DtPolicy, SchemeOrder, SolverConfig};
use crate::sweep::{DistanceNorm, MollifyMode, PerturbField, SweepConfig};

/// Nonlinearity family for the comparison-lemma section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhiSpec {
    /// Phi(y) = y^p.
    Power(f64),
    /// Phi(y) = e^y.
    Exp,
    /// Phi(y) = c.
    Const(f64),
}

impl PhiSpec {
    pub fn build(&self) -> ScalarFn {
        match *self {
            PhiSpec::Power(p) => Box::new(move |y: f64| y.max(0.0).powf(p)),
            PhiSpec::Exp => Box::new(|y: f64| y.exp()),
            PhiSpec::Const(c) => Box::new(move |_| c),
        }
    }
}

/// Time-weight family for the comparison-lemma section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaSpec {
    /// delta(t) = v.
    Const(f64),
}

impl DeltaSpec {
    pub fn build(&self) -> ScalarFn {
        match *self {
            DeltaSpec::Const(v) => Box::new(move |_| v),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Lemma17Section {
    pub d: f64,
    pub tau0: f64,
    pub t_end: f64,
    pub phi: PhiSpec,
    pub delta: DeltaSpec,
    /// Conductivities for verify_bound rows.
    pub kappas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepSection {
    pub config: SweepConfig,
    /// Optional stability probe: perturbed field and perturbation sizes.
    pub stability: Option<(PerturbField, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct FullConfig {
    pub gas: GasParams,
    pub grid: Grid,
    pub solver: SolverConfig,
    pub initial: InitialDataSpec,
    pub sweep: Option<SweepSection>,
    pub lemma17: Option<Lemma17Section>,
}

/// One parsed `key = value` with its source line (for error reporting).
struct Entry {
    line: usize,
    value: String,
}

type Section = HashMap<String, Entry>;

fn parse_sections(text: &str) -> Result<HashMap<String, Section>> {
    const KNOWN: [&str; 6] = ["gas", "grid", "solver", "initial", "sweep", "lemma17"];
    let mut sections: HashMap<String, Section> = HashMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("malformed section header {line:?}"),
                });
            }
            let name = line[1..line.len() - 1].trim().to_string();
            if !KNOWN.contains(&name.as_str()) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("unknown section [{name}]"),
                });
            }
            if sections.contains_key(&name) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("duplicate section [{name}]"),
                });
            }
            sections.insert(name.clone(), Section::new());
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected `key = value`, got {line:?}"),
            });
        };
        let Some(section) = &current else {
            return Err(Error::Parse {
                line: line_no,
                msg: "key outside any [section]".into(),
            });
        };
        let key = key.trim().to_string();
        let entry = Entry {
            line: line_no,
            value: value.trim().to_string(),
        };
        if sections.get_mut(section).unwrap().insert(key.clone(), entry).is_some() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("duplicate key {key:?} in [{section}]"),
            });
        }
    }
    Ok(sections)
}

/// Typed accessor over one section that tracks which keys were consumed so
/// leftovers can be rejected.
struct Reader {
    name: &'static str,
    entries: Section,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(e) => e.value.parse::<f64>().map_err(|_| Error::Parse {
                line: e.line,
                msg: format!("{key} in [{}] must be a number, got {:?}", self.name, e.value),
            }),
        }
    }

    fn f64_opt(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::Parse {
                    line: e.line,
                    msg: format!("{key} in [{}] must be a number, got {:?}", self.name, e.value),
                }),
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            None => Ok(default),
            Some(e) => e.value.parse::<usize>().map_err(|_| Error::Parse {
                line: e.line,
                msg: format!(
                    "{key} in [{}] must be a nonnegative integer, got {:?}",
                    self.name, e.value
                ),
            }),
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(e) => match e.value.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                other => Err(Error::Parse {
                    line: e.line,
                    msg: format!("{key} in [{}] must be true or false, got {other:?}", self.name),
                }),
            },
        }
    }

    fn string(&mut self, key: &str, default: &str) -> Result<(String, usize)> {
        match self.take(key) {
            None => Ok((default.to_string(), 0)),
            Some(e) => Ok((e.value, e.line)),
        }
    }

    fn f64_list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => {
                let vals: Vec<f64> = e
                    .value
                    .split(',')
                    .map(|tok| {
                        tok.trim().parse::<f64>().map_err(|_| Error::Parse {
                            line: e.line,
                            msg: format!(
                                "{key} in [{}] must be a comma-separated number list, got {:?}",
                                self.name, tok
                            ),
                        })
                    })
                    .collect::<Result<_>>()?;
                Ok(Some(vals))
            }
        }
    }

    fn finish(self) -> Result<()> {
        if let Some((key, e)) = self.entries.into_iter().next() {
            return Err(Error::Parse {
                line: e.line,
                msg: format!("unknown key {key:?} in [{}]", self.name),
            });
        }
        Ok(())
    }
}

fn reader(sections: &mut HashMap<String, Section>, name: &'static str) -> Reader {
    Reader {
        name,
        entries: sections.remove(name).unwrap_or_default(),
    }
}

pub fn parse_config_str(text: &str) -> Result<FullConfig> {
    let mut sections = parse_sections(text)?;
    let has_sweep = sections.contains_key("sweep");
    let has_lemma = sections.contains_key("lemma17");

    let mut gas = reader(&mut sections, "gas");
    let params = GasParams::new(
        gas.f64("mu", 1.0)?,
        gas.f64("r", 1.0)?,
        gas.f64("cv", 1.0)?,
        gas.f64("kappa", 0.0)?,
    )?;
    gas.finish()?;

    let mut grid_r = reader(&mut sections, "grid");
    let grid = Grid::new(grid_r.usize("n", 128)?)?;
    grid_r.finish()?;

    let mut sol = reader(&mut sections, "solver");
    let (order_s, order_line) = sol.string("scheme_order", "2")?;
    let scheme_order = match order_s.as_str() {
        "1" => SchemeOrder::First,
        "2" => SchemeOrder::Second,
        other => {
            return Err(Error::Parse {
                line: order_line,
                msg: format!("scheme_order must be 1 or 2, got {other:?}"),
            })
        }
    };
    let (policy_s, policy_line) = sol.string("dt_policy", "adaptive")?;
    let dt_policy = match policy_s.as_str() {
        "adaptive" => DtPolicy::Adaptive,
        "fixed" => DtPolicy::Fixed,
        other => {
            return Err(Error::Parse {
                line: policy_line,
                msg: format!("dt_policy must be adaptive or fixed, got {other:?}"),
            })
        }
    };
    let solver = SolverConfig {
        dt_initial: sol.f64("dt_initial", 1e-3)?,
        t_end: sol.f64("t_end", 1.0)?,
        cfl_safety: sol.f64("cfl_safety", 0.9)?,
        snapshot_every: sol.usize("snapshot_every", 1)?,
        scheme_order,
        dt_policy,
    };
    solver.validate()?;
    sol.finish()?;

    let mut ini = reader(&mut sections, "initial");
    let (gen_s, gen_line) = ini.string("generator", "constant")?;
    let generator = match gen_s.as_str() {
        "constant" => Generator::Constant {
            rho: ini.f64("rho", 1.0)?,
            u: ini.f64("u", 0.0)?,
            theta: ini.f64("theta", 1.0)?,
        },
        "sine_density" => Generator::SineDensity {
            rho_mean: ini.f64("rho_mean", 1.0)?,
            rho_amp: ini.f64("rho_amp", 0.3)?,
            u_amp: ini.f64("u_amp", 0.1)?,
            theta: ini.f64("theta", 1.0)?,
        },
        "sine_all" => Generator::SineAll {
            rho_mean: ini.f64("rho_mean", 1.0)?,
            rho_amp: ini.f64("rho_amp", 0.3)?,
            u_amp: ini.f64("u_amp", 0.1)?,
            theta_mean: ini.f64("theta_mean", 1.0)?,
            theta_amp: ini.f64("theta_amp", 0.1)?,
            phase: ini.f64("phase", 0.0)?,
        },
        "sampled_jump" => Generator::SampledJump {
            rho_left: ini.f64("rho_left", 0.8)?,
            rho_right: ini.f64("rho_right", 1.2)?,
            jump_at: ini.f64("jump_at", 0.5)?,
            u: ini.f64("u", 0.0)?,
            theta: ini.f64("theta", 1.0)?,
        },
        "file" => Generator::File {
            path: ini.string("path", "")?.0,
        },
        other => {
            return Err(Error::Parse {
                line: gen_line,
                msg: format!(
                    "generator must be one of constant, sine_density, sine_all, \
                     sampled_jump, file; got {other:?}"
                ),
            })
        }
    };
    let rho_lower = ini.f64_opt("rho_lower")?;
    let rho_upper = ini.f64_opt("rho_upper")?;
    let theta_lower = ini.f64_opt("theta_lower")?;
    let theta_upper = ini.f64_opt("theta_upper")?;
    let pair = |lo: Option<f64>, hi: Option<f64>, what: &str| -> Result<Option<(f64, f64)>> {
        match (lo, hi) {
            (None, None) => Ok(None),
            (Some(l), Some(h)) => Ok(Some((l, h))),
            _ => Err(Error::Validation(format!(
                "{what} envelope needs both lower and upper values"
            ))),
        }
    };
    let initial = InitialDataSpec {
        generator,
        rho_bounds: pair(rho_lower, rho_upper, "rho0")?,
        theta_bounds: pair(theta_lower, theta_upper, "theta0")?,
        normalize_momentum: ini.bool("normalize_momentum", false)?,
    };
    ini.finish()?;

    let sweep = if has_sweep {
        let mut sw = reader(&mut sections, "sweep");
        let kappas = sw
            .f64_list("kappas")?
            .ok_or_else(|| Error::Validation("[sweep] requires a kappas list".into()))?;
        let (moll_s, moll_line) = sw.string("mollify", "none")?;
        let mollify = if moll_s == "none" {
            MollifyMode::None
        } else if moll_s == "per_kappa" {
            MollifyMode::PerKappa
        } else if let Some(eta_s) = moll_s.strip_prefix("fixed:") {
            let eta = eta_s.parse::<f64>().map_err(|_| Error::Parse {
                line: moll_line,
                msg: format!("mollify width must be a number, got {eta_s:?}"),
            })?;
            MollifyMode::Fixed(eta)
        } else {
            return Err(Error::Parse {
                line: moll_line,
                msg: format!("mollify must be none, per_kappa, or fixed:WIDTH, got {moll_s:?}"),
            });
        };
        let (norms_s, norms_line) = sw.string(
            "distance_norms",
            "L2L2_rho,L2L2_theta,L2H1_u,lagrangian_composed",
        )?;
        let distance_norms: Vec<DistanceNorm> = norms_s
            .split(',')
            .map(|tok| {
                DistanceNorm::from_id(tok.trim()).ok_or_else(|| Error::Parse {
                    line: norms_line,
                    msg: format!("unknown distance norm {:?}", tok.trim()),
                })
            })
            .collect::<Result<_>>()?;
        let (field_s, field_line) = sw.string("stability_field", "none")?;
        let stability = match field_s.as_str() {
            "none" => None,
            "rho" | "u" => {
                let sizes = sw.f64_list("stability_sizes")?.ok_or_else(|| {
                    Error::Validation("stability probe requires stability_sizes".into())
                })?;
                let field = if field_s == "rho" { PerturbField::Rho } else { PerturbField::U };
                Some((field, sizes))
            }
            other => {
                return Err(Error::Parse {
                    line: field_line,
                    msg: format!("stability_field must be none, rho, or u, got {other:?}"),
                })
            }
        };
        let config = SweepConfig { kappas, mollify, distance_norms };
        config.validate()?;
        sw.finish()?;
        Some(SweepSection { config, stability })
    } else {
        None
    };

    let lemma17 = if has_lemma {
        let mut lm = reader(&mut sections, "lemma17");
        let (phi_s, phi_line) = lm.string("phi", "power:2")?;
        let phi = if phi_s == "exp" {
            PhiSpec::Exp
        } else if let Some(p_s) = phi_s.strip_prefix("power:") {
            PhiSpec::Power(p_s.parse::<f64>().map_err(|_| Error::Parse {
                line: phi_line,
                msg: format!("phi power must be a number, got {p_s:?}"),
            })?)
        } else if let Some(c_s) = phi_s.strip_prefix("const:") {
            PhiSpec::Const(c_s.parse::<f64>().map_err(|_| Error::Parse {
                line: phi_line,
                msg: format!("phi constant must be a number, got {c_s:?}"),
            })?)
        } else {
            return Err(Error::Parse {
                line: phi_line,
                msg: format!("phi must be power:P, exp, or const:C, got {phi_s:?}"),
            });
        };
        let (delta_s, delta_line) = lm.string("delta", "const:1")?;
        let delta = if let Some(v_s) = delta_s.strip_prefix("const:") {
            DeltaSpec::Const(v_s.parse::<f64>().map_err(|_| Error::Parse {
                line: delta_line,
                msg: format!("delta constant must be a number, got {v_s:?}"),
            })?)
        } else {
            return Err(Error::Parse {
                line: delta_line,
                msg: format!("delta must be const:V, got {delta_s:?}"),
            });
        };
        let section = Lemma17Section {
            d: lm.f64("d", 0.0)?,
            tau0: lm.f64("tau0", 1.0)?,
            t_end: lm.f64("t_end", 1.0)?,
            phi,
            delta,
            kappas: lm.f64_list("kappas")?.unwrap_or_else(|| vec![0.5]),
        };
        if !(section.d >= 0.0) {
            return Err(Error::Validation(format!(
                "lemma17 growth rate must satisfy d >= 0, got {}",
                section.d
            )));
        }
        lm.finish()?;
        Some(section)
    } else {
        None
    };

    // Everything consumed; leftover sections would be a logic error (all
    // known names were drained above).
    debug_assert!(sections.is_empty());

    Ok(FullConfig { gas: params, grid, solver, initial, sweep, lemma17 })
}

pub fn parse_config(path: &Path) -> Result<FullConfig> {
    parse_config_str(&std::fs::read_to_string(path)?)
}
