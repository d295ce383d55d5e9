use rand::Rng;
use rand_distr::StandardNormal;

use super::rng::{noise_stream, StreamId};
use super::trace::QuadratureTrace;
use crate::analytic::{stability_margin, NoiseModel};
use crate::model::{OscillatorParams, ParametricPhase, QuantumReadout, ThermalBath};
use crate::{Error, Result};

/// Run settings for the rotating-frame integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatingRun {
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    /// Initial (X₁, X₂), m.
    pub initial: [f64; 2],
    /// When false the run is deterministic (homogeneous decay plus drive).
    pub noise: bool,
    pub phase: ParametricPhase,
    /// Resonant drive amplitude F₀, N; displaces the mean of X₁.
    pub f0: f64,
    /// Keep every `decimate`-th step.
    pub decimate: usize,
}

impl RotatingRun {
    pub fn new(duration: f64, dt: f64, seed: u64) -> Self {
        Self {
            duration,
            dt,
            seed,
            initial: [0.0, 0.0],
            noise: true,
            phase: ParametricPhase::Deamplify,
            f0: 0.0,
            decimate: 1,
        }
    }

    /// Largest step allowed for the given gains.
    pub fn max_dt(osc: &OscillatorParams, gs: f64, gfb: f64) -> f64 {
        let fastest = 1f64.max(1.0 + gs).max(stability_margin(gs, gfb).abs());
        0.01 / (osc.gamma_m() * fastest)
    }
}

/// One exact Ornstein–Uhlenbeck step for dX = (−aX + b)dt + √D dW.
#[derive(Debug, Clone, Copy)]
struct OuStep {
    decay: f64,
    drift: f64,
    sigma: f64,
}

impl OuStep {
    fn new(a: f64, b: f64, d: f64, dt: f64) -> Self {
        let x = a * dt;
        // (1 − e^{−a dt})/a and (1 − e^{−2a dt})/(2a), both → dt as a → 0
        let lin = if x.abs() < 1e-12 { dt } else { -(-x).exp_m1() / a };
        let quad = if x.abs() < 1e-12 { dt } else { -(-2.0 * x).exp_m1() / (2.0 * a) };
        Self {
            decay: (-x).exp(),
            drift: b * lin,
            sigma: (d * quad).sqrt(),
        }
    }

    #[inline]
    fn apply(&self, x: f64, n: f64) -> f64 {
        x * self.decay + self.drift + self.sigma * n
    }
}

/// Integrates the linearized quadrature equations with ideal (instantaneous)
/// feedback on X₂. Noise intensities are those of `NoiseModel::diffusion`, so
/// stationary variances reproduce the analytic ones without step-size bias.
///
/// Unstable gains still produce a trace, flagged `divergent` and truncated at
/// the first non-finite sample.
pub fn simulate_rotating(
    osc: &OscillatorParams,
    bath: &ThermalBath,
    gs: f64,
    gfb: f64,
    readout: Option<&QuantumReadout>,
    run: &RotatingRun,
) -> Result<QuadratureTrace> {
    let model = NoiseModel::new(*osc, *bath, gs, gfb, readout.copied())?;
    if !(run.dt > 0.0 && run.dt.is_finite()) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    if !(run.duration > 0.0 && run.duration.is_finite()) {
        return Err(Error::invalid("duration", "must be positive"));
    }
    let max_dt = RotatingRun::max_dt(osc, gs, gfb);
    if run.dt > max_dt * (1.0 + 1e-12) {
        return Err(Error::StepSize {
            dt: run.dt,
            reason: format!("must not exceed {max_dt:.3e} s to resolve the fastest decay"),
        });
    }
    let decimate = run.decimate.max(1);

    let gm = osc.gamma_m();
    let (a1, a2) = match run.phase {
        ParametricPhase::Deamplify => (0.5 * gm * (1.0 + gs), 0.5 * gm * stability_margin(gs, gfb)),
        ParametricPhase::Amplify => (0.5 * gm * (1.0 - gs), 0.5 * gm * (1.0 + gs + gfb)),
    };
    let (d1, d2) = if run.noise { model.diffusion() } else { (0.0, 0.0) };
    let b1 = run.f0 / (2.0 * osc.mass() * osc.omega_m());
    let s1 = OuStep::new(a1, b1, d1, run.dt);
    let s2 = OuStep::new(a2, 0.0, d2, run.dt);

    let steps = (run.duration / run.dt).round() as usize;
    let mut rng1 = noise_stream(run.seed, StreamId::Quadrature1);
    let mut rng2 = noise_stream(run.seed, StreamId::Quadrature2);
    let cap = steps / decimate + 1;
    let mut x1s = Vec::with_capacity(cap);
    let mut x2s = Vec::with_capacity(cap);
    let [mut x1, mut x2] = run.initial;
    x1s.push(x1);
    x2s.push(x2);
    let mut divergent = a1 <= 0.0 || a2 <= 0.0;
    for i in 1..=steps {
        let (n1, n2) = if run.noise {
            (rng1.sample::<f64, _>(StandardNormal), rng2.sample::<f64, _>(StandardNormal))
        } else {
            (0.0, 0.0)
        };
        x1 = s1.apply(x1, n1);
        x2 = s2.apply(x2, n2);
        if !(x1.is_finite() && x2.is_finite()) || x1.abs().max(x2.abs()) > 1e100 {
            divergent = true;
            break;
        }
        if i % decimate == 0 {
            x1s.push(x1);
            x2s.push(x2);
        }
    }
    Ok(QuadratureTrace {
        dt: run.dt * decimate as f64,
        x1: x1s,
        x2: x2s,
        seed: run.seed,
        params: format!(
            "rotating m={:e} omega_m={:e} gamma_m={:e} T={:e} gs={gs:e} gfb={gfb:e} readout={:?} phase={:?} f0={:e} dt={:e} duration={:e} decimate={decimate}",
            osc.mass(),
            osc.omega_m(),
            gm,
            bath.temperature(),
            readout.map(|r| (r.gamma_qba(), r.eta_det())),
            run.phase,
            run.f0,
            run.dt,
            run.duration,
        ),
        divergent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::classical_variances;
    use crate::model::classical_sigma0_sq;

    fn osc() -> OscillatorParams {
        OscillatorParams::with_q(1e-12, 2.0 * std::f64::consts::PI * 1e4, 1e4).unwrap()
    }

    #[test]
    fn homogeneous_decay() {
        let osc = osc();
        let bath = ThermalBath::new(300.0).unwrap();
        let (gs, gfb) = (2.0, 5.0);
        let dt = RotatingRun::max_dt(&osc, gs, gfb);
        let mut run = RotatingRun::new(2000.0 * dt, dt, 0);
        run.noise = false;
        run.initial = [1e-9, 2e-9];
        let tr = simulate_rotating(&osc, &bath, gs, gfb, None, &run).unwrap();
        let t = tr.dt * (tr.len() - 1) as f64;
        let g = osc.gamma_m();
        let e1 = 1e-9 * (-0.5 * g * (1.0 + gs) * t).exp();
        let e2 = 2e-9 * (-0.5 * g * (1.0 - gs + gfb) * t).exp();
        assert!((tr.x1.last().unwrap() / e1 - 1.0).abs() < 1e-9);
        assert!((tr.x2.last().unwrap() / e2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn drive_sets_mean_amplitude() {
        let osc = osc();
        let bath = ThermalBath::new(0.0).unwrap();
        let gs = 3.0;
        let dt = RotatingRun::max_dt(&osc, gs, 0.0);
        let mut run = RotatingRun::new(40.0 / osc.gamma_m(), dt, 0);
        run.noise = false;
        run.f0 = 1e-12;
        let tr = simulate_rotating(&osc, &bath, gs, 0.0, None, &run).unwrap();
        let expect = crate::analytic::steady_state_amplitude(run.f0, &osc, gs);
        assert!((tr.x1.last().unwrap() / expect - 1.0).abs() < 1e-6);
    }

    #[test]
    fn reproducible() {
        let osc = osc();
        let bath = ThermalBath::new(300.0).unwrap();
        let dt = RotatingRun::max_dt(&osc, 1.0, 1.0);
        let run = RotatingRun::new(1000.0 * dt, dt, 42);
        let a = simulate_rotating(&osc, &bath, 1.0, 1.0, None, &run).unwrap();
        let b = simulate_rotating(&osc, &bath, 1.0, 1.0, None, &run).unwrap();
        assert_eq!(a, b);
        let c = simulate_rotating(&osc, &bath, 1.0, 1.0, None, &RotatingRun { seed: 43, ..run }).unwrap();
        assert_ne!(a.x1, c.x1);
    }

    #[test]
    fn rejects_coarse_steps() {
        let osc = osc();
        let bath = ThermalBath::new(300.0).unwrap();
        let dt = 2.0 * RotatingRun::max_dt(&osc, 0.0, 0.0);
        let run = RotatingRun::new(1.0, dt, 0);
        assert!(matches!(
            simulate_rotating(&osc, &bath, 0.0, 0.0, None, &run),
            Err(Error::StepSize { .. })
        ));
    }

    #[test]
    fn unstable_is_flagged() {
        let osc = osc();
        let bath = ThermalBath::new(300.0).unwrap();
        let dt = RotatingRun::max_dt(&osc, 1.5, 0.0);
        let run = RotatingRun::new(100.0 / osc.gamma_m(), dt, 1);
        let tr = simulate_rotating(&osc, &bath, 1.5, 0.0, None, &run).unwrap();
        assert!(tr.divergent);
        assert!(tr.x1.iter().chain(&tr.x2).all(|v| v.is_finite()));
    }

    #[test]
    fn classical_free_variance() {
        let osc = osc();
        let bath = ThermalBath::new(300.0).unwrap();
        let s0 = classical_sigma0_sq(&osc, &bath);
        let expect = classical_variances(0.0, 0.0, s0).unwrap();
        let g = osc.gamma_m();
        let dt = RotatingRun::max_dt(&osc, 0.0, 0.0);
        let mut mean = 0.0;
        let seeds = 20;
        for seed in 0..seeds {
            let mut run = RotatingRun::new(1010.0 / g, dt, seed);
            run.decimate = 20;
            let tr = simulate_rotating(&osc, &bath, 0.0, 0.0, None, &run).unwrap();
            let (s1, _) = tr.stats(10.0 / g, 10).unwrap();
            mean += s1.variance / seeds as f64;
        }
        assert!((mean / expect.sigma1_sq - 1.0).abs() < 0.05, "{}", mean / expect.sigma1_sq);
    }
}
