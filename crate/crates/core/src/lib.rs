//! Physics models, stochastic simulation and data-analysis tools for
//! feedback-stabilized parametric squeezing of a thermally driven mechanical
//! resonator.
//!
//! All quantities are SI internally (kg, m, s, rad/s, N, F, V). Power spectral
//! densities produced by [`analytic`] are double-sided in angular rotating-frame
//! frequency; spectra estimated by [`spectral`] are single-sided in hertz.

pub mod analytic;
pub mod capdesign;
pub mod constants;
mod error;
pub mod model;
pub mod pipeline;
pub mod simulate;
pub mod spectral;
pub mod sweep;

pub use error::{Error, Result};
