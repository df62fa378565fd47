//! Finite-volume solver for a bulk-surface reaction-diffusion system with
//! nonlinear boundary exchange, together with a monotone iteration scheme and
//! entropy-based diagnostics.

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod linsolve;
pub mod model;
pub mod monotone;
pub mod stepper;

pub use error::{Error, Result};
pub use grid::{GeometryKind, GridGeometry};
pub use model::{Equilibrium, InitialCondition, ModelParams, State};
pub use stepper::StepConfig;
