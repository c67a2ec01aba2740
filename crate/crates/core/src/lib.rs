//! Monte Carlo and analytic model of a heralded single-photon source whose
//! idler arm is gated by a fast switch triggered from herald clicks.
//!
//! Pipeline: [`pair_source`] samples photon numbers per pump pulse,
//! [`optical_chain`] applies losses, the gate and detectors,
//! [`coincidence`] bins clicks into rates and `g(2)`, and [`harness`] wires
//! runs, sweeps and calibration together. [`spectral`] is independent of the
//! counting pipeline and computes heralded purity from a joint spectrum.

pub mod coincidence;
pub mod error;
pub mod harness;
pub mod optical_chain;
pub mod pair_source;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
