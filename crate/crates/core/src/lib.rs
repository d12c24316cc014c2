//! Behavioral simulator for memristor-based spike sorting.
//!
//! - [`device`]: thresholded-integrator memristor model with reset pulses.
//! - [`signal`]: conditioning, spike windows, triplet streams, synthetic recordings.
//! - [`sorter`]: batch/bin read schedule, fractional-change features, detection
//!   and classification.
//! - [`texel`]: analog template-matching cell, array, trigger sampler and
//!   charge budget.

pub mod device;
pub mod error;
pub mod io;
pub mod reference;
pub mod signal;
pub mod sorter;
pub mod texel;

pub use error::{Error, Result};
