//! Time-domain stochastic simulation: rotating-frame quadrature SDEs, the
//! full stiffness-modulated equation of motion, a digital lock-in and a
//! phase-locked loop closing the feedback on the phase quadrature.

mod lockin;
mod pll;
mod position;
mod rng;
mod rotating;
mod trace;

pub use lockin::{lockin_demodulate, Lockin, LockinSettings};
pub use pll::{feedback_rate, proportional_gain_for, run_pll, PllRun, PllTrace};
pub use position::{simulate_position, PositionRun};
pub use rng::{noise_stream, StreamId};
pub use rotating::{simulate_rotating, RotatingRun};
pub use trace::{read_binary, write_binary, PositionTrace, QuadratureTrace, SampleStats, TraceData};
