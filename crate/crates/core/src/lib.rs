//! Numerical continuation of n-body choreographies from the regular polygon
//! relative equilibrium to the figure eight.
//!
//! The n-body problem restricted to choreographies with the polygon's
//! symmetry reduces to a delay equation for one body. That equation is
//! augmented with unfolding parameters, phase conditions and regularized
//! reciprocal distances so that it becomes polynomial, projected onto
//! truncated Fourier series, and followed with pseudo-arclength
//! continuation through a symmetry-breaking branch point up to the
//! frequency of the figure eight.

pub mod archive;
pub mod augmented;
pub mod continuation;
pub mod error;
pub mod fourier;
pub mod model;
pub mod pipeline;
pub mod run;
pub mod solver;
pub mod stability;
pub mod state;

pub use error::{ChoreoError, Result};
