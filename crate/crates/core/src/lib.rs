//! Numerical toolkit for a nonlocal reaction-diffusion model of a phenotypically
//! structured population facing a periodically fluctuating environment that
//! also shifts at constant speed.
//!
//! Module layout follows the computation:
//! [`model`] defines the growth-rate landscape, [`discretization`] the trait
//! grid and finite-difference operators, [`pde_engine`] the time stepper,
//! [`floquet`] the principal periodic eigenpair and derived quantities, and
//! [`asymptotics`] the small-mutation expansions.

pub mod asymptotics;
pub mod discretization;
pub mod error;
pub mod floquet;
pub mod model;
pub mod numerics;
pub mod pde_engine;

pub use error::{Error, Result};
