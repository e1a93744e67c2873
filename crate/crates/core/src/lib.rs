//! A numerical laboratory for quantitative unique continuation and
//! observability of the stochastic heat equation
//! `dφ - Δφ dt = aφ dt + bφ dW(t)` with bounded potentials.
//!
//! The whole space is truncated to a periodic lattice. Expectations are
//! estimated by reproducible Monte Carlo over Brownian paths, and each
//! estimate of the theory (local energy bounds, frequency monotonicity,
//! interpolation and observability inequalities, null controllability)
//! has a verifier that reports both sides and a verdict.

pub mod ensemble;
pub mod error;
pub mod frequency;
pub mod hum_control;
pub mod lattice;
pub mod observability;
pub mod runner;
pub mod scenarios;
pub mod sde_core;
pub mod spectral;
pub mod verifiers;
pub mod weights;

pub use error::{Error, Result};
