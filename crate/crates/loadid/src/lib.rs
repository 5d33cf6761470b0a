//! Dynamic structural load identification workbench.
//!
//! Recovers unknown force time histories acting on a shear-type building from
//! noisy acceleration measurements, two ways:
//!
//! * a residual Kalman filter that performs joint input–state–parameter
//!   estimation in a single causal pass ([`rkf`]), and
//! * three small sequence learners (LSTM, GRU, 1D CNN) trained from scratch on
//!   small datasets ([`nets`]).
//!
//! Supporting modules build the structural model ([`model`]), generate
//! simulated datasets ([`simulate`]), score the estimates with an accumulated
//! relative error metric ([`metrics`]), and drive end-to-end experiments from
//! JSON configurations ([`cli`]).
//!
//! The `examples/` directory contains one runnable example per capability;
//! the `loadid` binary exposes the same pipeline as subcommands.

pub mod cli;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nets;
pub mod rkf;
pub mod seeding;
pub mod simulate;

pub use error::{Error, Result};
