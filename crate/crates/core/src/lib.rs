//! Fractional repetition gradient codes and the analysis around them.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure computation:
//!
//! * [`codes`]: the FRC(n, k, c) assignment, block coverage and gradient recovery.
//! * [`straggler`]: shifted-exponential completion times and order-statistic runtimes.
//! * [`analysis`]: coverage moments p and q, convergence envelopes, noise floor and
//!   time-to-accuracy bounds.
//! * [`optim`]: decomposable objectives with per-component gradient oracles.
//! * [`simulator`]: deterministic replay of synchronous coded gradient descent.
//!
//! IO, networking and the command line live in the `gradcode` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod analysis;
pub mod codes;
pub mod error;
pub mod linalg;
pub mod optim;
pub mod rng;
pub mod simulator;
pub mod straggler;

pub use error::{Error, Result};
