use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// 1 - g_s + g_fb <= 0: the anti-squeezed quadrature self-oscillates.
    #[error("unstable: anti-squeezed damping margin {margin} <= 0")]
    Unstable { margin: f64 },

    /// Amplified quadrature at or above the parametric threshold.
    #[error("parametric threshold reached (g_s = {gs})")]
    Threshold { gs: f64 },

    #[error("feedback gain {gfb} requires a non-zero measurement rate")]
    FeedbackWithoutMeasurement { gfb: f64 },

    #[error("capacitor gap closed at x = {x} m (d0 = {d0} m)")]
    GapClosed { x: f64, d0: f64 },

    #[error("no stable equilibrium at V_DC = {vdc} V (pull-in)")]
    PullIn { vdc: f64 },

    #[error("electrostatic softening exceeds mechanical stiffness (radicand {radicand})")]
    OverSoftening { radicand: f64 },

    #[error("threshold voltage undefined for zero bias")]
    ZeroBias,

    #[error("time step {dt} s too coarse: {reason}")]
    StepSize { dt: f64, reason: String },

    #[error("output rate {rate} Hz aliases a {bandwidth} Hz demodulation bandwidth")]
    Aliasing { rate: f64, bandwidth: f64 },

    #[error("need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by the physics or numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::InvalidParameter { .. } | Error::TooShort { .. } | Error::InsufficientData(_)
        )
    }
}
