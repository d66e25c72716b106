//! Finite-volume solver for spherically symmetric transport on a moving
//! domain with an infiltrating species.
//!
//! The library discretizes hyperbolic free-boundary problems of the form
//! arising in radial tumor-growth models: native species are carried by a
//! velocity field determined from an incompressibility constraint, one
//! species additionally infiltrates through the moving boundary with its
//! own velocity, and the domain radius follows the boundary velocity.
//! Equations are solved in the normalized coordinate `eta = r/R(t)`.
//!
//! Two spatial discretizations are provided:
//!
//! * a conventional scheme that fluxes the conservative variables with the
//!   combined advective velocity, and
//! * an enhanced scheme with segregated, additive fluxes that preserve both
//!   the discrete geometric conservation law (uniform states stay uniform)
//!   and the discrete totality conservation law (the species sum obeys the
//!   same scheme), to machine precision.
//!
//! Time integration offers forward Euler, a two-stage TVD Runge-Kutta, and
//! implicit backward-Euler / two-stage DIRK variants.

pub mod chemo;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod flux;
pub mod grid;
pub mod io;
mod linalg;
pub mod model;
pub mod runner;
pub mod scheme;
pub mod time;
pub mod tumor;
pub mod velocity;


pub use config::{parse_config, RunConfig, ScenarioId};
pub use error::SolverError;
pub use grid::{Grid, RadiusState};
pub use runner::{run_convergence_suite, run_scenario, RunArtifacts, RunStatus, RunSummary};
pub use scheme::{FluxOrder, Integrator, MethodConfig, Problem, Scheme, State};
pub use tumor::StopRule;
