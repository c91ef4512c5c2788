//! Simulation and diagnostics for `ẍ + a(t)ẋ + ∇G(x) = 0` with vanishing damping.

pub mod analyze;
pub mod config;
pub mod integrate;
pub mod oracle;
pub mod potential;
pub mod quad;
pub mod report;
pub mod rng;
pub mod schedule;
pub mod sgd;
pub mod verify;
mod special;

pub use special::gamma;
