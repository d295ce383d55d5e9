use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::rng::{noise_stream, StreamId};
use super::trace::PositionTrace;
use crate::constants::K_B;
use crate::model::{DriveConfig, OscillatorParams, ThermalBath};
use crate::{Error, Result};

/// Run settings for the full equation of motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionRun {
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    /// Drive (carrier) frequency Ω, rad/s; the pump runs at 2Ω.
    pub omega: f64,
    /// Ideal feedback gain Γ_fb/Γ_m acting on the instantaneous X₂.
    pub gfb: f64,
    pub thermal: bool,
    /// Initial (x, ẋ).
    pub initial: [f64; 2],
}

impl PositionRun {
    pub fn new(duration: f64, dt: f64, seed: u64, omega: f64) -> Self {
        Self {
            duration,
            dt,
            seed,
            omega,
            gfb: 0.0,
            thermal: true,
            initial: [0.0, 0.0],
        }
    }

    /// Step giving 32 samples per carrier period.
    pub fn default_dt(omega: f64) -> f64 {
        TAU / (32.0 * omega)
    }
}

/// Checks that the carrier is resolved with at least 16 samples per period.
pub(crate) fn check_carrier(dt: f64, omega: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::invalid("omega", "must be positive"));
    }
    let limit = TAU / (16.0 * omega);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepSize {
            dt,
            reason: format!("need at least 16 samples per carrier period (dt <= {limit:.3e} s)"),
        });
    }
    Ok(())
}

/// Forces other than the spring, damping and bath, evaluated at drive phase θ.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Forcing {
    pub kp_over_m: f64,
    pub pump_angle: f64,
    pub f0_over_m: f64,
    /// Ω·Γ_fb: acceleration per metre of X₂.
    pub fb: f64,
}

impl Forcing {
    #[inline]
    pub fn accel(&self, x: f64, v: f64, theta: f64, omega: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let mut a = -self.kp_over_m * (2.0 * theta + self.pump_angle).sin() * x + self.f0_over_m * c;
        if self.fb != 0.0 {
            let x2 = x * c - v / omega * s;
            a += self.fb * x2 * s;
        }
        a
    }
}

/// Strang splitting: half kick, exact damped-oscillator flow, half kick, then
/// a thermal velocity impulse. The exact flow keeps the carrier phase free of
/// step-size dispersion.
#[derive(Debug, Clone)]
pub(crate) struct Mechanics {
    dt: f64,
    flow: [[f64; 2]; 2],
    kick_sigma: f64,
    rng: ChaCha8Rng,
}

impl Mechanics {
    pub fn new(osc: &OscillatorParams, bath: &ThermalBath, dt: f64, seed: u64, thermal: bool) -> Result<Self> {
        let w0 = osc.omega_m();
        let g = 0.5 * osc.gamma_m();
        if g >= w0 {
            return Err(Error::invalid("gamma_m", "position integrator needs an underdamped oscillator"));
        }
        let wd = (w0 * w0 - g * g).sqrt();
        let e = (-g * dt).exp();
        let (s, c) = (wd * dt).sin_cos();
        // x(t) = e^{-gt}[x0 cos + (v0 + g x0)/wd sin]
        let flow = [
            [e * (c + g / wd * s), e * s / wd],
            [-e * (w0 * w0 / wd) * s, e * (c - g / wd * s)],
        ];
        let kick_sigma = if thermal {
            (2.0 * osc.gamma_m() * K_B * bath.temperature() * dt / osc.mass()).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            dt,
            flow,
            kick_sigma,
            rng: noise_stream(seed, StreamId::Force),
        })
    }

    /// Advances (x, v) by one step; θ₀, θ₁ are the drive phases at both ends.
    #[inline]
    pub fn step(&mut self, state: &mut [f64; 2], forcing: &Forcing, theta0: f64, theta1: f64, omega: f64) {
        let [mut x, mut v] = *state;
        let h = 0.5 * self.dt;
        v += h * forcing.accel(x, v, theta0, omega);
        let f = &self.flow;
        (x, v) = (f[0][0] * x + f[0][1] * v, f[1][0] * x + f[1][1] * v);
        v += h * forcing.accel(x, v, theta1, omega);
        if self.kick_sigma > 0.0 {
            v += self.kick_sigma * self.rng.sample::<f64, _>(StandardNormal);
        }
        *state = [x, v];
    }
}

/// Integrates m ẍ + mΓ_m ẋ + [k_m + k_p sin(2Ωt + φ_p)] x = F_th + F₀ cos Ωt + F_fb,
/// with F_fb = mΩΓ_fb X₂ sin Ωt using the instantaneous phase quadrature.
pub fn simulate_position(
    osc: &OscillatorParams,
    bath: &ThermalBath,
    drive: &DriveConfig,
    kp: f64,
    run: &PositionRun,
) -> Result<PositionTrace> {
    check_carrier(run.dt, run.omega)?;
    if !(kp >= 0.0 && kp.is_finite()) {
        return Err(Error::invalid("kp", "must be finite and >= 0"));
    }
    if !(run.gfb >= 0.0 && run.gfb.is_finite()) {
        return Err(Error::invalid("gfb", "must be finite and >= 0"));
    }
    let forcing = Forcing {
        kp_over_m: kp / osc.mass(),
        pump_angle: drive.phase.pump_angle(),
        f0_over_m: drive.f0 / osc.mass(),
        fb: run.omega * run.gfb * osc.gamma_m(),
    };
    let mut mech = Mechanics::new(osc, bath, run.dt, run.seed, run.thermal)?;
    let steps = (run.duration / run.dt).round() as usize;
    let mut xs = Vec::with_capacity(steps + 1);
    let mut phases = Vec::with_capacity(steps + 1);
    let mut state = run.initial;
    let dtheta = run.omega * run.dt;
    xs.push(state[0]);
    phases.push(0.0);
    for i in 0..steps {
        // Phase from the step index avoids accumulating rounding error.
        let t0 = (i as f64 * dtheta) % TAU;
        let t1 = t0 + dtheta;
        mech.step(&mut state, &forcing, t0, t1, run.omega);
        if !state[0].is_finite() {
            return Err(Error::Unstable { margin: f64::NAN });
        }
        xs.push(state[0]);
        phases.push(t1 % TAU);
    }
    Ok(PositionTrace {
        dt: run.dt,
        x: xs,
        drive_phase: phases,
        seed: run.seed,
    })
}
