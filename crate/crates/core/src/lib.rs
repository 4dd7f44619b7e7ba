//! Cumulative-utility-parity fairness for federated learning under
//! intermittent client participation.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! transformation of explicit state; randomness always comes from a caller
//! supplied generator, see [`stream_rng`].

#![no_std]
// `!(x > 0.0)` style checks are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod availability;
pub mod engine;
pub mod metrics;
pub mod selection;
pub mod surrogate;
pub mod toyfl;
pub mod utility;

mod error;
mod vector;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for one independent stream of a run.
///
/// Streams let the availability process, each arm's selection and each
/// arm's utility noise consume randomness without perturbing each other.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
