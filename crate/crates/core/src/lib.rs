//! Self-consistent shifted-target Gaussian-process theory for finite
//! networks, at desk scale.
//!
//! The mean predictor of a finite network trained to equilibrium with
//! noisy gradients and weight decay equals GP regression on a shifted
//! target; the shift solves a self-consistent equation built from the
//! network's higher cumulants. This crate implements that program
//! end-to-end for two exactly-tractable students:
//!
//! * a two-layer linear CNN with non-overlapping windows, whose even
//!   cumulants of every order contract over an `S x S` window accumulator
//!   and resum in closed form ([`cumulants`]);
//! * a quadratic two-layer FCN (the phase-retrieval setting), whose
//!   cumulant generating function is an explicit log-determinant.
//!
//! On top of the cumulant layer sit the coupled-equation solvers
//! ([`saddle`]), plain/shifted GP regression ([`gp`]), a Langevin
//! ensemble trainer ([`langevin`]), hidden-weight spectral analysis with
//! the spiked Marchenko-Pastur transition ([`spectral`]), and validity
//! diagnostics ([`diagnostics`]).

pub mod cumulants;
pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod gp;
pub mod io;
pub mod kernels;
pub mod langevin;
pub mod rng;
pub mod saddle;
pub mod spectral;

pub use error::{Error, Result};
