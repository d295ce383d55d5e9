use std::f64::consts::PI;
use std::io::{self, Write};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rect,
    Hann,
}

impl Window {
    fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            // Periodic Hann, so overlapping segments sum to a constant.
            Window::Hann => (0..n).map(|i| (PI * i as f64 / n as f64).sin().powi(2)).collect(),
        }
    }
}

/// Single-sided power spectral density on bins f = k·df, k = 0..=N/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub df: f64,
    pub values: Vec<f64>,
    pub n_averages: usize,
    pub window: Window,
}

impl Spectrum {
    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.df
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.values.len()).map(|k| self.frequency(k)).collect()
    }

    /// Σ values·df, the variance the spectrum accounts for.
    pub fn total_power(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.df
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "f_hz,psd_m2_per_hz")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(out, "{:.9e},{:.9e}", self.frequency(k), v)?;
        }
        Ok(())
    }
}

/// Welch estimate: mean-removed, windowed segments of `segment_len` samples
/// advancing by (1 − overlap)·segment_len, normalized by the window power.
pub fn welch_psd(samples: &[f64], dt: f64, segment_len: usize, overlap: f64, window: Window) -> Result<Spectrum> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    if segment_len < 4 {
        return Err(Error::invalid("segment_len", "must be at least 4"));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid("overlap", "must lie in [0, 1)"));
    }
    if samples.len() < segment_len {
        return Err(Error::TooShort {
            needed: segment_len,
            got: samples.len(),
        });
    }
    let step = (((1.0 - overlap) * segment_len as f64).round() as usize).max(1);
    let w = window.weights(segment_len);
    let power: f64 = w.iter().map(|v| v * v).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment_len);
    let half = segment_len / 2;
    let mut acc = vec![0.0; half + 1];
    let mut buf = vec![Complex64::new(0.0, 0.0); segment_len];
    let mut count = 0;
    let mut start = 0;
    while start + segment_len <= samples.len() {
        let seg = &samples[start..start + segment_len];
        let mean = seg.iter().sum::<f64>() / segment_len as f64;
        for ((b, &x), &wi) in buf.iter_mut().zip(seg).zip(&w) {
            *b = Complex64::new((x - mean) * wi, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        count += 1;
        start += step;
    }
    let scale = dt / (power * count as f64);
    let values = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || (k == half && segment_len % 2 == 0) { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    Ok(Spectrum {
        df: 1.0 / (segment_len as f64 * dt),
        values,
        n_averages: count,
        window,
    })
}
