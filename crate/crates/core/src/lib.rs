//! Fokker-Planck equations for Marcus SDEs driven by Lévy processes.
//!
//! For `dX = f(X) dt + σ(X) ⋄ dL(t)` with `L` a Lévy process with triplet
//! `(b, A, ν)`, the crate provides
//!
//! * [`levy`]: triplets, product construction and increment sampling;
//! * [`flow`]: the Marcus map `H`, its inverse `H̃` and `|∂H̃/∂x|`;
//! * [`sde`]: jump-adapted Monte Carlo simulation and empirical densities;
//! * [`fpe`]: assembly and time stepping of the nonlocal Fokker-Planck
//!   operator on 1-D and 2-D grids;
//! * [`examples`]: closed-form maps of three reference models;
//! * [`cli`]: the batch front end behind the `marcusfpe` binary.

pub mod cli;
pub mod error;
pub mod examples;
pub mod flow;
pub mod fpe;
pub mod levy;
pub mod model;
pub mod sde;

pub use error::{Error, Result};
pub use flow::{check_inverse, marcus_forward, marcus_inverse, FlowResult, NoiseCoefficient};
pub use fpe::{DensityField, Grid};
pub use levy::{product_triplet, LevyTriplet, ScalarLevy, Truncation};
pub use model::{Drift, InitialCondition, ModelSpec};
pub use sde::{simulate_ensemble, simulate_path, PathEnsemble, SimulationParams};
