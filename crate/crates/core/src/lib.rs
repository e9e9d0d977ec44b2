//! Viscous Cahn–Hilliard solver on structured 1D/2D grids together with its
//! vanishing-diffusion limit, and the tooling to measure how fast solutions
//! converge as the diffusion coefficient goes to zero.
//!
//! Module map:
//! - [`grid`]: grids, quadrature, Neumann Laplacian, norms
//! - [`monotone`]: maximal monotone graphs, resolvents, Yosida approximations
//! - [`elliptic`]: inverse Neumann Laplacian, dual norm, initial-data mollifier
//! - [`stepper`]: implicit time stepping and trajectories
//! - [`analysis`]: δ-sweeps, rate fits, continuous-dependence checks
//! - [`scenario`]: configuration files, expression catalog, CSV output

pub mod analysis;
pub mod catalog;
pub mod elliptic;
pub mod error;
pub mod grid;
mod linalg;
pub mod mms;
pub mod monotone;
pub mod scenario;
pub mod stepper;

pub use error::{Error, Result};
pub use grid::{BoundaryTrace, Grid, Norms, ScalarField, TimeGrid};
pub use monotone::{LipschitzPerturbation, MonotoneGraph};
pub use stepper::{ProblemData, SpaceTimeFn, StepperConfig, Trajectory};
