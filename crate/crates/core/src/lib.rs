//! A desk-scale numerical laboratory for training 2-layer diagonal linear
//! networks with (stochastic) gradient descent.
//!
//! The crate is organised around the objects the experiments need:
//!
//! * [`data`] — regression instances, losses, gradients, batch sampling and
//!   seeded Gaussian data generation.
//! * [`train`] — the (S)GD engines over both network parametrisations
//!   (`u ⊙ v` and `½(w₊² − w₋²)`), trajectory recording and the safe default
//!   step-size rule. Engines implement a common [`train::engine::StepEngine`]
//!   trait and are selected by name.
//! * [`mirror`] — the hyperbolic-entropy machinery: `q`, `q±`, the running
//!   ledger of their sums, time-varying potentials, Bregman divergences and
//!   the limit quantities `α∞` and `β̃₀`.
//! * [`bias`] — independent solvers for the limiting interpolator: a damped
//!   Newton method on the KKT system and a dense simplex for the minimum-ℓ₁
//!   interpolator.
//! * [`analysis`] — spectral sandwich constants, gain-magnitude bounds,
//!   gradient-shape reports, edge-of-stability scans, flatness of the
//!   non-convex loss, and Monte-Carlo concentration benches.

pub mod analysis;
pub mod bias;
pub mod data;
pub mod error;
pub mod linalg;
pub mod mirror;
pub mod rng;
pub mod train;

pub use error::{CoreError, Result};
