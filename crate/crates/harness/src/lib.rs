//! Experiment harness for the variance-aware allocation policies: trial
//! loops, regret-bound curves, exhaustive oracles and rate fits.

pub mod bounds;
pub mod config;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod seeds;
pub mod selftest;
pub mod slopes;

pub use error::{HarnessError, Result};
