//! Numerical laboratory for the quasilinear wave equation
//! `-∂ₜ²Ψ + (1+Ψ)^P ΔΨ = 0` on a periodic box, tracking the approach to
//! degeneracy of the coefficient `1 + Ψ`.

pub mod curvature;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod initial_data;
pub mod orchestrator;
pub mod snapshot;

pub use error::{Error, Result};
