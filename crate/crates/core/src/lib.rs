//! Lumped-parameter thermal network analysis for spacecraft instruments.
//!
//! The crate covers the whole chain from geometry to answers: Monte Carlo
//! radiative exchange factors ([`radiative`]), assembly of the nodal energy
//! balance ([`network`]), steady and transient solvers ([`solvers`]),
//! frequency-domain gains about a steady state ([`linear`]) and orbital
//! environment loads ([`orbit`]).

pub mod geometry;
pub mod model;
pub mod radiative;
pub mod network;
pub mod solvers;
pub mod linear;
pub mod orbit;
