//! One module per experiment; each `run` returns a [`Report`](super::Report).

pub mod backpath;
pub mod couplings;
pub mod localization;
pub mod midtime;
pub mod product;
pub mod prop31;
pub mod scaling;
pub mod simulate;
pub mod slowdecorr;
pub mod tails;
