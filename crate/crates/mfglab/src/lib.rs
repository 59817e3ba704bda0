//! mfglab: a numerical laboratory for stationary mean-field games with
//! Riesz-type aggregating coupling and confining potential.
//!
//! The crate solves the coupled ergodic HJB / stationary Fokker-Planck
//! system on a truncated box, evaluates the associated constrained energy,
//! cross-validates the quadratic case against a normalized Choquard ground
//! state, and runs vanishing-viscosity continuation sweeps that measure
//! energy/multiplier scaling and mass concentration.
//!
//! All numerical kernels are generic over the scalar type via [`scalar::Real`]
//! (f32 or f64); the concrete aliases below fix f64, which is what the CLI
//! and the acceptance suite use.

pub mod choquard;
pub mod config;
pub mod energy;
pub mod error;
pub mod fokker_planck;
pub mod grid;
pub mod hjb;
pub mod io;
pub mod linsolve;
pub mod mfg;
pub mod rescaling;
pub mod riesz;
pub mod run;
pub mod scalar;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete f64 instantiations used by the CLI and the acceptance suite.
pub type GridSpec64 = grid::GridSpec<f64>;
pub type ScalarField64 = grid::ScalarField<f64>;
pub type VectorField64 = grid::VectorField<f64>;
pub type RieszKernelTable64 = riesz::RieszKernelTable<f64>;
pub type ProblemSpec64 = energy::ProblemSpec<f64>;
pub type FlowPair64 = energy::FlowPair<f64>;
pub type MFGSolution64 = mfg::MFGSolution<f64>;
