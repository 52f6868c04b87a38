//! Desk-scale intent-aware CTR prediction for trigger-induced recommendation.
//!
//! A small define-by-run autodiff engine ([`numeric`]), a seeded synthetic
//! corpus with planted intent structure ([`synth`]), counted intent labels
//! ([`intent`]), the intent-aware model and its DIN base ([`model`]), the
//! staged training pipeline ([`train`]) and ranking metrics ([`metrics`]).

pub mod cli;
pub mod config;
pub mod error;
pub mod intent;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod seed;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
