//! Physical constants, CODATA 2018 recommended values.

/// Reduced Planck constant, J·s. Exact (h / 2π with h fixed by the 2019 SI).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Boltzmann constant, J/K. Exact in the 2019 SI.
pub const K_B: f64 = 1.380_649e-23;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
