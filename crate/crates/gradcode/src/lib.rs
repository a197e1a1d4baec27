//! Simulation, TCP execution and command-line tooling for approximate gradient
//! codes built on fractional repetition assignments.

pub mod analyze;
pub mod config;
pub mod data;
mod error;
pub mod net;
pub mod output;
pub mod shard;
pub mod verify;

pub use error::{Error, Result};
pub use gradcode_core as core;
