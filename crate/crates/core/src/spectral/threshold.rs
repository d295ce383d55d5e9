use serde::{Deserialize, Serialize};

use super::lm::{self, Problem};
use crate::{Error, Result};

/// Curve used to extract the parametric threshold from a V_p sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdModel {
    /// Normalized variance 1/(1 + V_p/V_th).
    Variance,
    /// Amplified-quadrature gain s/(1 − V_p/V_th).
    GainAmp,
    /// Deamplified-quadrature gain s/(1 + V_p/V_th).
    GainDeamp,
}

impl ThresholdModel {
    fn has_scale(self) -> bool {
        !matches!(self, ThresholdModel::Variance)
    }

    fn sign(self) -> f64 {
        match self {
            ThresholdModel::GainAmp => -1.0,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub vth: f64,
    /// 1σ uncertainty of `vth`.
    pub uncertainty: f64,
    /// Overall scale (1 for the variance model).
    pub scale: f64,
    pub scale_uncertainty: f64,
    pub model: ThresholdModel,
    /// Root-mean-square weighted residual.
    pub rms_residual: f64,
}

/// Parameterized by u = 1/V_th, which keeps the model linear in the
/// denominator and lets u → 0 represent an unreachable threshold.
struct Curve<'a> {
    v: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
    model: ThresholdModel,
}

impl Curve<'_> {
    fn split(&self, p: &[f64]) -> (f64, f64) {
        if self.model.has_scale() {
            (p[0], p[1])
        } else {
            (p[0], 1.0)
        }
    }
}

impl Problem for Curve<'_> {
    fn n_params(&self) -> usize {
        1 + self.model.has_scale() as usize
    }

    fn n_residuals(&self) -> usize {
        self.v.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (u, s) = self.split(p);
        let k = self.model.sign();
        for i in 0..self.v.len() {
            out[i] = (s / (1.0 + k * u * self.v[i]) - self.y[i]) * self.w[i];
        }
    }

    fn jacobian(&self, p: &[f64], out: &mut [f64]) {
        let (u, s) = self.split(p);
        let k = self.model.sign();
        let n = self.n_params();
        for i in 0..self.v.len() {
            let d = 1.0 + k * u * self.v[i];
            out[i * n] = -s * k * self.v[i] / (d * d) * self.w[i];
            if n == 2 {
                out[i * n + 1] = self.w[i] / d;
            }
        }
    }

    fn admissible(&self, p: &[f64]) -> bool {
        let (u, s) = self.split(p);
        if !(u.is_finite() && s.is_finite() && u > 0.0) {
            return false;
        }
        match self.model {
            ThresholdModel::GainAmp => self.v.iter().all(|v| u * v < 1.0),
            _ => true,
        }
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[v.len() / 2])
}

/// Least-squares threshold voltage from (V_p, y) pairs. `sigma`, if given,
/// weights each point by 1/σ. The reported uncertainty is scaled by the
/// reduced χ².
pub fn fit_threshold(vp: &[f64], y: &[f64], sigma: Option<&[f64]>, model: ThresholdModel) -> Result<ThresholdFit> {
    if vp.len() != y.len() || sigma.is_some_and(|s| s.len() != vp.len()) {
        return Err(Error::invalid("vp", "voltages, values and uncertainties must have equal lengths"));
    }
    if vp.len() < 5 {
        return Err(Error::InsufficientData(format!("{} points, need at least 5", vp.len())));
    }
    if vp.iter().chain(y).any(|v| !v.is_finite()) || vp.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("vp", "voltages must be finite and >= 0, values finite"));
    }
    let w: Vec<f64> = match sigma {
        Some(s) => {
            if s.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::invalid("sigma", "must be positive"));
            }
            s.iter().map(|v| 1.0 / v).collect()
        }
        None => vec![1.0; vp.len()],
    };
    let vmax = vp.iter().cloned().fold(0.0, f64::max);
    if !(vmax > 0.0) {
        return Err(Error::InsufficientData("all voltages are zero".into()));
    }

    // Starting point: scale from the lowest-voltage point, u from the median
    // of single-point inversions.
    let i0 = (0..vp.len()).min_by(|&a, &b| vp[a].total_cmp(&vp[b])).unwrap_or(0);
    let s0 = if model.has_scale() { y[i0] } else { 1.0 };
    let k = model.sign();
    let u0 = median(
        vp.iter()
            .zip(y)
            .filter(|(v, yv)| **v > 0.0 && **yv != 0.0)
            .map(|(v, yv)| k * (s0 / yv - 1.0) / v)
            .filter(|u| *u > 0.0 && u.is_finite())
            .collect(),
    )
    .unwrap_or(1.0 / vmax);
    let u0 = match model {
        ThresholdModel::GainAmp => u0.min(0.99 / vmax),
        _ => u0,
    };

    let curve = Curve { v: vp, y, w, model };
    let mut p0 = vec![u0];
    if model.has_scale() {
        p0.push(s0);
    }
    let sol = lm::solve(&curve, &p0)?;
    let (u, s) = curve.split(&sol.params);
    let vth = 1.0 / u;
    if model == ThresholdModel::GainAmp && vp.iter().any(|&v| v >= vth) {
        return Err(Error::invalid("vp", "amplified-gain data must lie below the fitted threshold"));
    }
    let var_u = sol.covariance[0][0];
    Ok(ThresholdFit {
        vth,
        uncertainty: var_u.sqrt() / (u * u),
        scale: s,
        scale_uncertainty: if model.has_scale() { sol.covariance[1][1].sqrt() } else { 0.0 },
        model,
        rms_residual: (sol.cost / vp.len() as f64).sqrt(),
    })
}
