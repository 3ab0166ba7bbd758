//! Numerical laboratory for stable nonlocal minimal surfaces.
//!
//! The crate evaluates fractional mean curvature of stacked graph sheets,
//! the stability quadratic form of the fractional perimeter, exact
//! one-dimensional reductions for slab configurations, the Toda-type system
//! that governs sheet interactions as `s → 1`, and the spherical certificates
//! used in the classification of stable cones.
//!
//! Start with the runnable programs in `examples/`.

pub mod cli;
pub mod cone;
pub mod geometry;
pub mod kernel;
pub mod nonlocal;
pub mod quadrature;
pub mod slab;
pub mod toda;
