//! Lagrangian simulation of viscous, self-gravitating gas spheres whose
//! density vanishes at a physical vacuum boundary, around Lane-Emden
//! equilibria.
//!
//! The pipeline is: [`polytrope`] solves for the equilibrium, [`scheme`]
//! samples it on a uniform mass grid and defines the semi-discrete momentum
//! system, [`initial_data`] builds perturbed states, [`integrator`] advances
//! them, and [`diagnostics`] measures the decay. [`linearized`] holds the
//! linear problem and [`harness`] the configuration and experiment driver.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod initial_data;
pub mod integrator;
pub mod linearized;
pub mod polytrope;
pub mod scheme;

pub use diagnostics::{DecayExponentTable, DecayFitResult, DiagnosticOptions, DiagnosticRecord};
pub use error::{Error, Result};
pub use harness::{load_config, run_experiment, ExperimentReport, RunConfig};
pub use initial_data::{Family, InitialData, PerturbationSpec};
pub use integrator::{Mode, StepPolicy, Termination, TimeStep};
pub use linearized::{LinearState, Stencil};
pub use polytrope::{DimensionlessSolution, PolytropeProfile};
pub use scheme::{BackgroundGrid, BoundaryAnchor, LagrangianState, Viscosity};
