//! Numerical laboratory for compatible paths of the Poisson sigma model.
//!
//! The crate discretizes the space of pairs `(X, eta)` with
//! `dX + pi^sharp(X) eta = 0`, builds its tangent space and symplectic
//! orthogonal, and checks coisotropy, gauge symmetries, parallel transport
//! and dual-pair statements as finite-dimensional linear algebra.

pub mod catalog;
pub mod cellflow;
pub mod config;
pub mod convergence;
pub mod dual;
pub mod error;
pub mod harness;
pub mod lemmas;
pub mod path;
pub mod poly;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod symplin;
pub mod tensor;

pub use config::Tolerances;
pub use error::{LabError, Result};
