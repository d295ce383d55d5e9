use std::f64::consts::{PI, TAU};

use super::lockin::{Lockin, LockinSettings};
use super::position::{check_carrier, Forcing, Mechanics};
use super::trace::QuadratureTrace;
use crate::analytic::steady_state_amplitude;
use crate::model::{DriveConfig, OscillatorParams, PllGains, ThermalBath};
use crate::{Error, Result};

/// Effective feedback gain Γ_fb/Γ_m of a PLL with proportional gain K_p (Hz/rad).
///
/// A frequency step Δf = K_p·δ rotates the demodulation frame, so the phase
/// error δ ≈ X₂/X̄₁ relaxes at 2πK_p; X₂ then decays at Γ_fb/2 = 2πK_p.
pub fn feedback_rate(gains: &PllGains, osc: &OscillatorParams) -> f64 {
    4.0 * PI * gains.proportional / osc.gamma_m()
}

/// Inverse of [`feedback_rate`].
pub fn proportional_gain_for(gfb: f64, osc: &OscillatorParams) -> f64 {
    gfb * osc.gamma_m() / (4.0 * PI)
}

/// Settings for a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PllRun {
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    /// Offset of the oscillator's starting frequency from Ω_m, Hz.
    pub detuning: f64,
    pub lockin: LockinSettings,
    /// Lock is lost when |X₂| > fraction·|X₁| after `settle` seconds.
    pub lock_fraction: f64,
    pub settle: f64,
    /// Start on the driven steady state with the filters preloaded.
    pub locked_start: bool,
    pub thermal: bool,
}

impl PllRun {
    pub fn new(duration: f64, dt: f64, seed: u64, lockin: LockinSettings) -> Self {
        Self {
            duration,
            dt,
            seed,
            detuning: 0.0,
            lockin,
            lock_fraction: 0.5,
            settle: 0.0,
            locked_start: true,
            thermal: true,
        }
    }
}

/// Demodulated quadratures plus the loop's frequency record, both at the
/// lock-in output rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PllTrace {
    pub quadratures: QuadratureTrace,
    /// Drive frequency, Hz.
    pub frequency_hz: Vec<f64>,
    pub lock_lost: bool,
    pub lock_lost_at: Option<f64>,
}

/// Full-position simulation in which a PI loop on the demodulated phase
/// error atan2(X₂, X₁) steers the drive frequency. The parametric pump stays
/// phase-locked at twice the drive phase.
pub fn run_pll(
    osc: &OscillatorParams,
    bath: &ThermalBath,
    drive: &DriveConfig,
    kp: f64,
    gains: &PllGains,
    run: &PllRun,
) -> Result<PllTrace> {
    let w0 = osc.omega_m();
    check_carrier(run.dt, w0 + TAU * run.detuning.abs())?;
    if !(gains.proportional >= 0.0 && gains.integral >= 0.0) {
        return Err(Error::invalid("pll", "gains must be >= 0"));
    }
    if !(gains.bandwidth > 0.0 && gains.bandwidth < run.lockin.bandwidth) {
        return Err(Error::invalid("pll.bandwidth", "must be positive and below the demodulation bandwidth"));
    }
    if drive.f0 == 0.0 {
        return Err(Error::invalid("f0", "the loop needs a coherent drive to lock to"));
    }
    let forcing = Forcing {
        kp_over_m: kp / osc.mass(),
        pump_angle: drive.phase.pump_angle(),
        f0_over_m: drive.f0 / osc.mass(),
        fb: 0.0,
    };
    let mut mech = Mechanics::new(osc, bath, run.dt, run.seed, run.thermal)?;
    let mut lockin = Lockin::new(&run.lockin, run.dt, w0)?;
    let dt_out = run.dt * lockin.decimation() as f64;

    let mut state = [0.0, 0.0];
    if run.locked_start {
        let a = steady_state_amplitude(drive.f0, osc, drive.gs);
        state = [0.0, w0 * a];
        lockin.preload(a, 0.0);
    }

    let steps = (run.duration / run.dt).round() as usize;
    let cap = steps / lockin.decimation() + 1;
    let (mut x1s, mut x2s, mut freqs) = (Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap));
    let mut theta = 0.0f64;
    let mut correction = TAU * run.detuning;
    let mut integral = 0.0;
    let mut lock_lost_at = None;
    let mut divergent = false;
    for i in 0..steps {
        let w = w0 + correction;
        let t1 = theta + w * run.dt;
        mech.step(&mut state, &forcing, theta, t1, w);
        theta = t1 % TAU;
        if !state[0].is_finite() {
            divergent = true;
            break;
        }
        if let Some((x1, x2)) = lockin.push(state[0], theta) {
            let err = x2.atan2(x1);
            integral += gains.integral * err * dt_out;
            correction = TAU * (run.detuning + gains.proportional * err + integral);
            x1s.push(x1);
            x2s.push(x2);
            freqs.push((w0 + correction) / TAU);
            let t = (i + 1) as f64 * run.dt;
            if lock_lost_at.is_none() && t >= run.settle && x2.abs() > run.lock_fraction * x1.abs() {
                lock_lost_at = Some(t);
            }
        }
    }
    Ok(PllTrace {
        quadratures: QuadratureTrace {
            dt: dt_out,
            x1: x1s,
            x2: x2s,
            seed: run.seed,
            params: format!(
                "pll m={:e} omega_m={:e} gamma_m={:e} T={:e} kp={kp:e} f0={:e} phase={:?} gains={:?} detuning={:e} dt={:e} duration={:e}",
                osc.mass(),
                w0,
                osc.gamma_m(),
                bath.temperature(),
                drive.f0,
                drive.phase,
                gains,
                run.detuning,
                run.dt,
                run.duration
            ),
            divergent,
        },
        frequency_hz: freqs,
        lock_lost: lock_lost_at.is_some(),
        lock_lost_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParametricPhase;

    fn osc() -> OscillatorParams {
        OscillatorParams::with_q(1e-12, TAU * 1e4, 1e3).unwrap()
    }

    #[test]
    fn calibration_roundtrip() {
        let osc = osc();
        let kp = proportional_gain_for(3.0, &osc);
        let g = PllGains {
            proportional: kp,
            integral: 0.0,
            bandwidth: 1.0,
        };
        assert!((feedback_rate(&g, &osc) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn acquires_lock_from_detuned_start() {
        let osc = osc();
        let bath = ThermalBath::new(0.0).unwrap();
        let drive = DriveConfig::new(1e-12, ParametricPhase::Deamplify, 0.0).unwrap();
        let gains = PllGains {
            proportional: proportional_gain_for(4.0, &osc),
            integral: 1000.0,
            bandwidth: 30.0,
        };
        let dt = TAU / (32.0 * osc.omega_m());
        let mut run = PllRun::new(60.0 / osc.gamma_m(), dt, 0, LockinSettings::new(1000.0, 4000.0));
        run.detuning = 0.5;
        run.thermal = false;
        let tr = run_pll(&osc, &bath, &drive, 0.0, &gains, &run).unwrap();
        let f_end = *tr.frequency_hz.last().unwrap();
        assert!((f_end - 1e4).abs() < 2e-3, "{f_end}");
        let q = &tr.quadratures;
        let (x1, x2) = (*q.x1.last().unwrap(), *q.x2.last().unwrap());
        assert!(x2.abs() < 1e-3 * x1.abs(), "{x1} {x2}");
    }

    #[test]
    fn rejects_wide_loop() {
        let osc = osc();
        let bath = ThermalBath::new(0.0).unwrap();
        let drive = DriveConfig::new(1e-12, ParametricPhase::Deamplify, 0.0).unwrap();
        let gains = PllGains {
            proportional: 1.0,
            integral: 0.0,
            bandwidth: 5000.0,
        };
        let run = PllRun::new(0.01, 1e-6, 0, LockinSettings::new(1000.0, 4000.0));
        assert!(run_pll(&osc, &bath, &drive, 0.0, &gains, &run).is_err());
    }
}
