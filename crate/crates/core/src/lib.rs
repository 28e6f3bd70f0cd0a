//! Simulation laboratory for blind digital over-the-air computation.
//!
//! Distributed devices quantize local scalars (or vectors) onto a shared
//! codebook, modulate the chosen index onto a common preamble matrix, and
//! transmit simultaneously over a massive-MIMO multiple-access channel. The
//! receiver combines with the composite channel (no per-device CSI), recovers
//! the histogram of chosen indices with a sparse detector, and reconstructs
//! the average of the sources. The crate provides the full pipeline plus the
//! analytical MSE bound, optimal codebook-size selection, and a seeded
//! experiment harness that regenerates every figure table as CSV.

pub mod airlink;
pub mod analysis;
pub mod channel;
pub mod detect;
pub mod error;
pub mod harness;
pub mod mat;
pub mod quantize;
pub mod seed;

pub use error::{Error, Result};
