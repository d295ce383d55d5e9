use std::f64::consts::{PI, TAU};

use super::trace::{PositionTrace, QuadratureTrace};
use crate::{Error, Result};

/// Demodulator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockinSettings {
    /// −3 dB bandwidth of the whole filter cascade, Hz.
    pub bandwidth: f64,
    /// Number of cascaded one-pole sections.
    pub order: usize,
    /// Output sample rate, Sa/s.
    pub output_rate: f64,
}

impl LockinSettings {
    pub fn new(bandwidth: f64, output_rate: f64) -> Self {
        Self {
            bandwidth,
            order: 4,
            output_rate,
        }
    }

    /// Corner frequency of each section so the cascade is −3 dB at `bandwidth`.
    pub fn section_corner(&self) -> f64 {
        let n = self.order as f64;
        self.bandwidth / (2f64.powf(1.0 / n) - 1.0).sqrt()
    }

    fn alpha(&self, dt: f64) -> f64 {
        -(-TAU * self.section_corner() * dt).exp_m1()
    }

    /// |H|² of the discrete cascade at frequency f (Hz) for input step dt.
    pub fn gain_sq(&self, f: f64, dt: f64) -> f64 {
        let a = self.alpha(dt);
        let w = TAU * f * dt;
        let b = 1.0 - a;
        let section = a * a / (1.0 - 2.0 * b * w.cos() + b * b);
        section.powi(self.order as i32)
    }

    fn validate(&self, dt: f64, omega: f64) -> Result<usize> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::invalid("bandwidth", "must be positive"));
        }
        if self.order == 0 {
            return Err(Error::invalid("order", "must be at least 1"));
        }
        if !(self.output_rate > 0.0 && self.output_rate.is_finite()) {
            return Err(Error::invalid("output_rate", "must be positive"));
        }
        if self.bandwidth >= omega / (4.0 * PI) {
            return Err(Error::invalid(
                "bandwidth",
                format!("must be well below the carrier frequency {:.4e} Hz", omega / TAU),
            ));
        }
        let factor = (1.0 / (dt * self.output_rate)).round().max(1.0) as usize;
        let rate = 1.0 / (factor as f64 * dt);
        if rate < 2.0 * self.bandwidth {
            return Err(Error::Aliasing {
                rate,
                bandwidth: self.bandwidth,
            });
        }
        Ok(factor)
    }
}

/// Streaming IQ demodulator: X₁ = 2·LP[x sin θ], X₂ = 2·LP[x cos θ].
#[derive(Debug, Clone)]
pub struct Lockin {
    alpha: f64,
    stages: Vec<[f64; 2]>,
    factor: usize,
    count: usize,
}

impl Lockin {
    pub fn new(settings: &LockinSettings, dt: f64, omega: f64) -> Result<Self> {
        let factor = settings.validate(dt, omega)?;
        Ok(Self {
            alpha: settings.alpha(dt),
            stages: vec![[0.0; 2]; settings.order],
            factor,
            count: 0,
        })
    }

    /// Starts the filters at a known (X₁, X₂), skipping the initial transient.
    pub fn preload(&mut self, x1: f64, x2: f64) {
        for s in &mut self.stages {
            *s = [0.5 * x1, 0.5 * x2];
        }
    }

    pub fn decimation(&self) -> usize {
        self.factor
    }

    /// Current filtered quadratures.
    #[inline]
    pub fn current(&self) -> (f64, f64) {
        let last = self.stages[self.stages.len() - 1];
        (2.0 * last[0], 2.0 * last[1])
    }

    /// Feeds one sample at reference phase θ; returns a decimated output when due.
    #[inline]
    pub fn push(&mut self, x: f64, theta: f64) -> Option<(f64, f64)> {
        let (s, c) = theta.sin_cos();
        let mut u = [x * s, x * c];
        for st in &mut self.stages {
            st[0] += self.alpha * (u[0] - st[0]);
            st[1] += self.alpha * (u[1] - st[1]);
            u = *st;
        }
        self.count += 1;
        if self.count == self.factor {
            self.count = 0;
            Some(self.current())
        } else {
            None
        }
    }
}

/// Demodulates a position trace against its recorded drive phase.
/// `omega` is used to check that the filter sits well below the carrier.
pub fn lockin_demodulate(trace: &PositionTrace, omega: f64, settings: &LockinSettings) -> Result<QuadratureTrace> {
    if trace.x.len() != trace.drive_phase.len() {
        return Err(Error::invalid("trace", "position and phase lengths differ"));
    }
    let mut lockin = Lockin::new(settings, trace.dt, omega)?;
    let n = trace.x.len() / lockin.factor + 1;
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    for (&x, &th) in trace.x.iter().zip(&trace.drive_phase) {
        if let Some((a, b)) = lockin.push(x, th) {
            x1.push(a);
            x2.push(b);
        }
    }
    Ok(QuadratureTrace {
        dt: trace.dt * lockin.factor as f64,
        x1,
        x2,
        seed: trace.seed,
        params: format!(
            "lockin bandwidth={:e} order={} output_rate={:e} omega={omega:e}",
            settings.bandwidth, settings.order, settings.output_rate
        ),
        divergent: false,
    })
}
