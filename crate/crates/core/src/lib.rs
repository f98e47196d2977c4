//! Line-of-sight relay networks over Poisson building processes.
//!
//! Buildings are vertical segments `(x, h)` whose bases form a Poisson point
//! process on the line with i.i.d. heights. A point relays its signal to the
//! building that maximises the slope seen from it (the *blocking building*).
//! Iterating that map gives the blockage chain, and reversing it gives the
//! relay forest. This crate samples both, evaluates the closed-form laws
//! attached to them, and provides the Monte Carlo harness used to check one
//! against the other.
//!
//! Module map:
//!
//! * [`heights`]: height laws and the survival primitive `𝔉`.
//! * [`landscape`]: windowed, lazily extended building processes.
//! * [`blockage`]: infinite-range schemes, trajectories, `g_N`, `vis`.
//! * [`relay_tree`]: reverse shades, relay zones, forests and foils.
//! * [`finite_range`]: horizontal and general convex finite ranges.
//! * [`validation`]: Monte Carlo runner, statistics, acceptance checks.
//! * [`config`]: run configuration and named experiments.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blockage;
pub mod config;
pub mod error;
pub mod finite_range;
pub mod heights;
pub mod landscape;
pub mod quad;
pub mod relay_tree;
pub mod validation;

pub use error::{Error, Result};

/// A point of the half-plane: abscissa `x`, altitude `y`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Random stream used everywhere in the crate.
pub type Stream = rand_chacha::ChaCha8Rng;
