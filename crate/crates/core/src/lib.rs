//! Numerical verification of sharp `L^p` Hardy inequalities on the unit sphere.
//!
//! Geometry checks on `S^{N−1}`, a singular-endpoint quadrature engine,
//! the Hardy functionals evaluated on zonal profiles, the extremal families
//! with their closed-form moments, and a command-line front end.

// Reference constants are kept at full published precision, and `!(x > 0.0)`
// is the NaN-rejecting form of a positivity check.
#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod families;
pub mod functionals;
pub mod geometry;
pub mod quadrature;
pub mod special;
