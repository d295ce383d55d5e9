//! Physical parameter types and the derived scalars every other module uses.

use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, K_B};
use crate::{Error, Result};

/// Below this quality factor the rotating-frame description is questionable.
pub const LOW_Q_WARNING: f64 = 100.0;

/// Lumped single-mode mechanical oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    mass: f64,
    omega_m: f64,
    gamma_m: f64,
    q: f64,
}

impl OscillatorParams {
    /// `mass` in kg, `omega_m` and `gamma_m` in rad/s.
    pub fn new(mass: f64, omega_m: f64, gamma_m: f64) -> Result<Self> {
        check_positive("mass", mass)?;
        check_positive("omega_m", omega_m)?;
        check_positive("gamma_m", gamma_m)?;
        Ok(Self {
            mass,
            omega_m,
            gamma_m,
            q: omega_m / gamma_m,
        })
    }

    pub fn with_q(mass: f64, omega_m: f64, q: f64) -> Result<Self> {
        check_positive("q", q)?;
        let mut osc = Self::new(mass, omega_m, omega_m / q)?;
        osc.q = q;
        Ok(osc)
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn omega_m(&self) -> f64 {
        self.omega_m
    }

    pub fn gamma_m(&self) -> f64 {
        self.gamma_m
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Spring constant m·Ω_m².
    pub fn k_m(&self) -> f64 {
        self.mass * self.omega_m * self.omega_m
    }

    pub fn x_zpf(&self) -> f64 {
        zero_point_amplitude(self)
    }

    /// Set when Q < 100 and the slowly-varying quadrature picture degrades.
    pub fn low_q_warning(&self) -> bool {
        self.q < LOW_Q_WARNING
    }

    /// Squeezing gain produced by a stiffness modulation amplitude `kp` (N/m).
    pub fn gs_from_kp(&self, kp: f64) -> f64 {
        kp * self.q / (2.0 * self.k_m())
    }

    pub fn kp_from_gs(&self, gs: f64) -> f64 {
        gs * 2.0 * self.k_m() / self.q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalBath {
    temperature: f64,
}

impl ThermalBath {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature >= 0.0) || !temperature.is_finite() {
            return Err(Error::invalid("temperature", "must be finite and >= 0 K"));
        }
        Ok(Self { temperature })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Mean occupancy at the given mode frequency.
    pub fn nbar(&self, omega_m: f64) -> f64 {
        occupancy(self.temperature, omega_m)
    }
}

/// Operating point of the parametric pump relative to the resonant drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParametricPhase {
    /// X₁ is squeezed and its mean deamplified (φ_p = 0).
    Deamplify,
    /// X₁ is anti-squeezed and its mean amplified (φ_p = ±π/2 in the lab convention).
    Amplify,
}

impl ParametricPhase {
    /// Pump phase φ in k_p·sin(2Ωt + φ) that produces this operating point for
    /// x = X₁ sin Ωt + X₂ cos Ωt.
    pub fn pump_angle(self) -> f64 {
        match self {
            ParametricPhase::Deamplify => 0.0,
            ParametricPhase::Amplify => std::f64::consts::PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    /// Resonant drive amplitude F₀, N.
    pub f0: f64,
    pub phase: ParametricPhase,
    /// Normalized squeezing gain Γ_s/Γ_m.
    pub gs: f64,
    /// Stiffness modulation amplitude, N/m, when specified directly.
    pub kp: Option<f64>,
}

impl DriveConfig {
    pub fn new(f0: f64, phase: ParametricPhase, gs: f64) -> Result<Self> {
        check_non_negative("gs", gs)?;
        if !f0.is_finite() {
            return Err(Error::invalid("f0", "must be finite"));
        }
        Ok(Self {
            f0,
            phase,
            gs,
            kp: None,
        })
    }

    /// Builds the drive from a stiffness modulation, deriving g_s = k_p·Q/(2k_m).
    pub fn from_kp(f0: f64, phase: ParametricPhase, kp: f64, osc: &OscillatorParams) -> Result<Self> {
        check_non_negative("kp", kp)?;
        let mut drive = Self::new(f0, phase, osc.gs_from_kp(kp))?;
        drive.kp = Some(kp);
        Ok(drive)
    }

    /// Checks that an explicitly given k_p agrees with g_s.
    pub fn validate(&self, osc: &OscillatorParams) -> Result<()> {
        check_non_negative("gs", self.gs)?;
        if let Some(kp) = self.kp {
            let implied = osc.gs_from_kp(kp);
            let scale = implied.abs().max(self.gs.abs()).max(f64::MIN_POSITIVE);
            if (implied - self.gs).abs() / scale > 1e-12 {
                return Err(Error::invalid(
                    "kp",
                    format!("implies g_s = {implied}, but g_s = {} was given", self.gs),
                ));
            }
        }
        Ok(())
    }

    pub fn kp(&self, osc: &OscillatorParams) -> f64 {
        self.kp.unwrap_or_else(|| osc.kp_from_gs(self.gs))
    }
}

/// PI gains of the phase-locked loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PllGains {
    /// Hz of frequency correction per radian of phase error.
    pub proportional: f64,
    /// Hz per radian·second.
    pub integral: f64,
    /// Loop bandwidth in Hz; also sets the default near-DC fit exclusion.
    pub bandwidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    /// Normalized feedback gain Γ_fb/Γ_m.
    pub gfb: f64,
    pub pll: Option<PllGains>,
}

impl FeedbackConfig {
    pub fn new(gfb: f64) -> Result<Self> {
        check_non_negative("gfb", gfb)?;
        Ok(Self { gfb, pll: None })
    }
}

/// Continuous position readout through a resonantly probed bad cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumReadout {
    gamma_qba: f64,
    eta_det: f64,
    /// Optomechanical coupling g and cavity decay κ (rad/s), if known.
    pub cavity: Option<(f64, f64)>,
}

impl QuantumReadout {
    pub fn new(gamma_qba: f64, eta_det: f64) -> Result<Self> {
        check_non_negative("gamma_qba", gamma_qba)?;
        if !(eta_det > 0.0 && eta_det <= 1.0) {
            return Err(Error::invalid("eta_det", "must lie in (0, 1]"));
        }
        Ok(Self {
            gamma_qba,
            eta_det,
            cavity: None,
        })
    }

    /// Γ_qba = 4g²/κ, normalized by Γ_m.
    pub fn from_cavity(g: f64, kappa: f64, eta_det: f64, osc: &OscillatorParams) -> Result<Self> {
        check_positive("kappa", kappa)?;
        let mut readout = Self::new(4.0 * g * g / kappa / osc.gamma_m(), eta_det)?;
        readout.cavity = Some((g, kappa));
        Ok(readout)
    }

    pub fn gamma_qba(&self) -> f64 {
        self.gamma_qba
    }

    pub fn eta_det(&self) -> f64 {
        self.eta_det
    }

    /// Normalized measurement rate η_det·γ_qba.
    pub fn g_meas(&self) -> f64 {
        self.eta_det * self.gamma_qba
    }

    pub fn with_gamma_qba(&self, gamma_qba: f64) -> Result<Self> {
        let mut r = Self::new(gamma_qba, self.eta_det)?;
        r.cavity = None;
        Ok(r)
    }
}

/// Bose–Einstein occupancy 1/(exp(ħΩ/k_BT) − 1); zero at T = 0.
pub fn occupancy(temperature: f64, omega_m: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    let x = HBAR * omega_m / (K_B * temperature);
    1.0 / x.exp_m1()
}

/// √(ħ / 2mΩ_m).
pub fn zero_point_amplitude(osc: &OscillatorParams) -> f64 {
    (HBAR / (2.0 * osc.mass() * osc.omega_m())).sqrt()
}

/// Classical thermal variance σ₀² = k_BT / mΩ_m².
pub fn classical_sigma0_sq(osc: &OscillatorParams, bath: &ThermalBath) -> f64 {
    K_B * bath.temperature() / osc.k_m()
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

fn check_non_negative(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")))
    }
}
