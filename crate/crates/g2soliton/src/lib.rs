//! Numerical laboratory for cohomogeneity-one Laplacian solitons of the G2 Laplacian flow
//! with SU(3) and Sp(2) symmetry.
//!
//! Modules, bottom up: [`domain`] state types and observables, [`systems`] right-hand sides,
//! [`closure`] power series at the singular orbit, [`oracles`] closed-form solutions,
//! [`analysis`] integration and classification, [`cli`] the command-line surface.

pub mod analysis;
pub mod autodiff;
pub mod cli;
pub mod closure;
pub mod dd;
pub mod domain;
pub mod error;
pub mod mp;
pub mod ode;
pub mod oracles;
pub mod precise;
pub mod systems;

pub use error::{Error, Result};
