//! Simulation and verification toolkit for TASEP under a moving wall.
//!
//! Randomness comes from keyed Poisson streams ([`clockwork`]); [`dynamics`]
//! evolves particles label by label; [`couplings`] and [`backpaths`] hold the
//! pathwise comparisons; [`scaling`] the KPZ arithmetic; [`harness`] the
//! experiments, statistics and file formats.

pub mod backpaths;
pub mod clockwork;
pub mod couplings;
pub mod dynamics;
pub mod harness;
pub mod scaling;
