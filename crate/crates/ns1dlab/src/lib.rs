//! Numerical laboratory for the 1D periodic compressible heat-conducting
//! Navier-Stokes equations in Lagrangian label coordinates.
//!
//! The crate provides:
//! * exact discrete spatial operators and thermodynamic closures ([`grid`],
//!   [`gas`], [`state`]),
//! * an IMEX integrator for the Lagrangian system with the particle flow
//!   map ([`solver`]),
//! * the full functional/residual diagnostic suite ([`diagnostics`]),
//! * conductivity-limit sweeps, data mollification, and stability probes
//!   ([`mollify`], [`sweep`]),
//! * a standalone comparison-lemma toolkit for bounds of the form
//!   dtau/dt <= D tau + kappa delta(t) Phi(tau) ([`lemma17`]),
//! * config parsing, persistence, and the CLI plumbing ([`config`], [`io`]).

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod gas;
pub mod grid;
pub mod initial;
pub mod io;
pub mod lemma17;
pub mod mollify;
pub mod solver;
pub mod state;
pub mod sweep;
pub mod tridiag;

pub use error::{Error, Result};
pub use gas::GasParams;
pub use grid::{entropy_h, Grid};
pub use solver::{run, step, DtPolicy, SchemeOrder, SolverConfig, Trajectory};
pub use state::{thermo, DerivedFields, LagState};
