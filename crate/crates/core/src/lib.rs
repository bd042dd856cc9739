//! # vaelab
//!
//! A self-contained laboratory for Variational Auto-Encoders on toy 2D
//! densities. Everything is built from scratch on `f64`: a tape-based
//! reverse-mode autodiff engine, a seeded PRNG, the three toy datasets with
//! exact ground-truth densities and entropies, ELBO / importance-weighted /
//! MSE training objectives, importance-sampled likelihood evaluation, and
//! numerical checks of the information-theoretic identities that connect
//! them (flow limit, channel capacity, quantized reconstruction cost).
//!
//! The companion `vaelab-cli` crate exposes training, evaluation, rendering
//! and the identity checks as subcommands.

pub mod analysis;
pub mod autodiff;
pub mod datasets;
pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod vae;

pub use error::{Error, Result};
