//! Conical diffraction of time-harmonic plane waves by periodic impedance gratings.
//!
//! Two independent solvers are provided: a P1 finite element method on a
//! truncated period cell closed by a Dirichlet-to-Neumann map, and a Nystrom
//! boundary integral method based on the quasiperiodic Green's function.

pub mod bie;
pub mod dtn;
pub mod error;
pub mod fem;
pub mod green;
pub mod linalg;
pub mod mesh;
pub mod params;
pub mod profile;
pub mod special;
pub mod validation;

pub use error::{Error, Result};
