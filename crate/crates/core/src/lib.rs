//! Continual learning for wireless power control.
//!
//! The crate streams episodic interference-channel data, labels it with a
//! WMMSE oracle, trains a feedforward power-allocation policy under several
//! rehearsal strategies (including fairness-based min-max memory selection),
//! and evaluates sum-rate and approximation-ratio metrics. The `clwrx`
//! binary drives the full generate → label → train → report pipeline.

pub mod channelgen;
pub mod clcore;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod expcli;
pub mod linalg;
pub mod policy;
pub mod rates;
pub mod rng;
pub mod wmmse;

pub use error::{Error, Result};
