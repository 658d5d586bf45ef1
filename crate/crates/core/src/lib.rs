//! Monte-Carlo simulation and analysis of single- and two-photon beating
//! between two independent pulsed light sources.
//!
//! The crate is layered bottom-up:
//!
//! - [`model`]: closed-form beat intensity, visibility and correlation laws.
//! - [`simulate`]: seeded ensembles of detector traces with random initial
//!   phases, Wiener phase diffusion and coherent or thermal amplitudes.
//! - [`analyze`]: ensemble mean, peak reference time, two-time intensity
//!   correlation, beat period and per-pulse phase extraction.
//! - [`fit`]: bounded Levenberg-Marquardt fit of the dephased correlation
//!   model, power-law regression and temperature sweeps.
//!
//! Units throughout: time in μs, frequency in MHz, rates in μs⁻¹, power in
//! mW, temperature in kelvin.

pub mod analyze;
pub mod error;
pub mod fit;
pub mod model;
pub mod reduce;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
