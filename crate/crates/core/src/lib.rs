//! Substituting conservative systems for damped linear mechanical systems.
//!
//! A damped system `q'' + C q' + K q = 0` and one of its phase curves γ
//! determine a conservative system sharing γ. This crate integrates the
//! damped flow, builds that conservative system segment by segment, checks
//! the shared-curve property numerically, and lifts the construction to an
//! ensemble of initial conditions with functional derivatives and a Poisson
//! bracket.

pub mod ensemble;
pub mod error;
pub mod integrate;
pub mod interp;
pub mod model;
pub mod par;
pub mod substitute;
pub mod verify;

pub use error::{Error, Result};
pub use integrate::{integrate_conservative, integrate_damped, integrate_variational, TangentBlock, Trajectory};
pub use model::{DampedSystem, InitialCondition, PhaseState};
pub use par::Execution;
pub use substitute::{build_substituting_system, ConservativeForceField, MonotoneSegment, SubstitutingSystem};
