//! Estimators: Welch spectra, Lorentzian fits with near-DC exclusion,
//! threshold regression and Allan deviation.

mod allan;
mod lm;
mod lorentzian;
mod threshold;
mod welch;

pub use allan::{allan_deviation, octave_taus};
pub use lorentzian::{lorentzian, lorentzian_fit, variance_from_fit, FitOptions, LorentzianFit};
pub use threshold::{fit_threshold, ThresholdFit, ThresholdModel};
pub use welch::{welch_psd, Spectrum, Window};
