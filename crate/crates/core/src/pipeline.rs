//! End-to-end sweep: for each sweep value and seed, simulate the rotating
//! frame, estimate the X₁ spectrum, fit a Lorentzian and keep its area (or
//! the mean amplitude for gain sweeps); then aggregate over seeds and fit the
//! threshold voltage.

use serde::{Deserialize, Serialize};

use crate::analytic::{stability_margin, steady_state_amplitude, NoiseModel};
use crate::model::{OscillatorParams, ParametricPhase, ThermalBath};
use crate::simulate::{simulate_rotating, QuadratureTrace, RotatingRun};
use crate::spectral::{
    fit_threshold, lorentzian_fit, variance_from_fit, welch_psd, FitOptions, ThresholdFit, ThresholdModel, Window,
};
use crate::sweep::map_cells;
use crate::{Error, Result};

/// What each cell measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepQuantity {
    /// X₁ fluctuation variance from the Lorentzian area.
    Variance,
    /// Mean X₁ under a coherent drive with the pump amplifying X₁.
    GainAmp,
    /// Mean X₁ under a coherent drive with the pump deamplifying X₁.
    GainDeamp,
}

impl SweepQuantity {
    fn model(self) -> ThresholdModel {
        match self {
            SweepQuantity::Variance => ThresholdModel::Variance,
            SweepQuantity::GainAmp => ThresholdModel::GainAmp,
            SweepQuantity::GainDeamp => ThresholdModel::GainDeamp,
        }
    }

    fn phase(self) -> ParametricPhase {
        match self {
            SweepQuantity::GainAmp => ParametricPhase::Amplify,
            _ => ParametricPhase::Deamplify,
        }
    }
}

/// Swept variable: the pump voltage (with g_s = V_p/V_th) or g_s itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variable")]
pub enum SweepVariable {
    Vp { vth: f64 },
    Gs,
}

impl SweepVariable {
    pub fn gs(&self, value: f64) -> f64 {
        match self {
            SweepVariable::Vp { vth } => value / vth,
            SweepVariable::Gs => value,
        }
    }
}

/// Estimation settings shared by every cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSettings {
    /// Recorded length after settling, in units of 1/Γ₁.
    pub decay_times: f64,
    /// Recorded samples per 1/Γ₁.
    pub samples_per_decay: f64,
    /// Settling discard in units of 1/min(Γ₁, Γ₂).
    pub settle_decays: f64,
    pub segment_len: usize,
    pub overlap: f64,
    /// Half-width of the excluded band around 0 Hz, in frequency bins.
    pub exclude_bins: f64,
    /// Fit only bins within this many linewidths of 0 Hz.
    pub span_linewidths: f64,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            decay_times: 2000.0,
            samples_per_decay: 40.0,
            settle_decays: 10.0,
            segment_len: 4096,
            overlap: 0.5,
            exclude_bins: 1.5,
            span_linewidths: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub quantity: SweepQuantity,
    pub gfb: f64,
    /// Coherent drive amplitude for gain sweeps, N.
    pub f0: f64,
    pub estimator: EstimatorSettings,
}

/// One (value, seed) measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMeasurement {
    /// Variance (m²) or mean amplitude (m).
    pub value: f64,
    /// Fitted full linewidth, Hz (variance sweeps only).
    pub gamma_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub gs: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean: f64,
    pub std_err: f64,
    pub gamma_hz_mean: Option<f64>,
    pub gamma_hz_std_err: Option<f64>,
    /// Model value of the same quantity.
    pub predicted: f64,
    /// Distinct error messages of failed cells.
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub threshold: Option<ThresholdFit>,
    pub threshold_error: Option<String>,
}

/// Linewidth Γ₁ and the slowest rate of the chosen operating point, rad/s.
fn rates(osc: &OscillatorParams, gs: f64, gfb: f64, phase: ParametricPhase) -> (f64, f64) {
    let gm = osc.gamma_m();
    let (g1, g2) = match phase {
        ParametricPhase::Deamplify => (gm * (1.0 + gs), gm * stability_margin(gs, gfb)),
        ParametricPhase::Amplify => (gm * (1.0 - gs), gm * (1.0 + gs + gfb)),
    };
    (g1, g1.min(g2))
}

/// Simulates one cell and reduces it to a single measurement.
pub fn measure_cell(
    osc: &OscillatorParams,
    bath: &ThermalBath,
    gs: f64,
    plan: &SweepPlan,
    seed: u64,
) -> Result<CellMeasurement> {
    let est = &plan.estimator;
    let phase = plan.quantity.phase();
    let (g1, slowest) = rates(osc, gs, plan.gfb, phase);
    if !(slowest > 0.0) {
        return Err(Error::Unstable {
            margin: slowest / osc.gamma_m(),
        });
    }
    let dt = RotatingRun::max_dt(osc, gs, plan.gfb);
    let dt_rec = 1.0 / (est.samples_per_decay * g1);
    let decimate = ((dt_rec / dt).floor() as usize).max(1);
    let settle = est.settle_decays / slowest;
    let mut run = RotatingRun::new(settle + est.decay_times / g1, dt, seed);
    run.decimate = decimate;
    run.phase = phase;
    if plan.quantity != SweepQuantity::Variance {
        run.f0 = plan.f0;
    }
    let trace = simulate_rotating(osc, bath, gs, plan.gfb, None, &run)?;
    if trace.divergent {
        return Err(Error::Unstable {
            margin: slowest / osc.gamma_m(),
        });
    }
    let x1 = &trace.x1[trace.settle_index(settle)..];
    match plan.quantity {
        SweepQuantity::Variance => variance_of(x1, &trace, est),
        _ => Ok(CellMeasurement {
            value: x1.iter().sum::<f64>() / x1.len() as f64,
            gamma_hz: None,
        }),
    }
}

fn variance_of(x1: &[f64], trace: &QuadratureTrace, est: &EstimatorSettings) -> Result<CellMeasurement> {
    let spectrum = welch_psd(x1, trace.dt, est.segment_len, est.overlap, Window::Hann)?;
    let options = FitOptions {
        span_linewidths: Some(est.span_linewidths),
        ..FitOptions::baseband()
    };
    let fit = lorentzian_fit(&spectrum, est.exclude_bins * spectrum.df, &options)?;
    Ok(CellMeasurement {
        value: variance_from_fit(&fit),
        gamma_hz: Some(fit.gamma),
    })
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn predicted(osc: &OscillatorParams, bath: &ThermalBath, gs: f64, plan: &SweepPlan) -> f64 {
    match plan.quantity {
        SweepQuantity::Variance => NoiseModel::new(*osc, *bath, gs, plan.gfb, None)
            .and_then(|m| m.variances())
            .map(|v| v.sigma1_sq)
            .unwrap_or(f64::NAN),
        SweepQuantity::GainDeamp => steady_state_amplitude(plan.f0, osc, gs),
        SweepQuantity::GainAmp => {
            if gs < 1.0 {
                plan.f0 / (osc.mass() * osc.omega_m() * osc.gamma_m() * (1.0 - gs))
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Runs every (value, seed) cell on the work pool and aggregates in value order.
pub fn run_sweep(osc: &OscillatorParams, bath: &ThermalBath, plan: &SweepPlan, seeds: &[u64]) -> Result<SweepReport> {
    if seeds.is_empty() {
        return Err(Error::invalid("seeds", "at least one seed is required"));
    }
    if plan.values.is_empty() {
        return Err(Error::invalid("values", "the sweep has no values"));
    }
    if let SweepVariable::Vp { vth } = plan.variable {
        if !(vth > 0.0 && vth.is_finite()) {
            return Err(Error::invalid("vth", "must be positive"));
        }
    }
    if plan.quantity != SweepQuantity::Variance && plan.f0 == 0.0 {
        return Err(Error::invalid("f0", "gain sweeps need a coherent drive"));
    }
    let cells: Vec<(usize, u64)> = (0..plan.values.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results = map_cells(&cells, |&(i, seed)| {
        let gs = plan.variable.gs(plan.values[i]);
        measure_cell(osc, bath, gs, plan, seed)
    });

    let mut rows = Vec::with_capacity(plan.values.len());
    for (i, &value) in plan.values.iter().enumerate() {
        let gs = plan.variable.gs(value);
        let mut ok = Vec::new();
        let mut widths = Vec::new();
        let mut flags: Vec<String> = Vec::new();
        for ((ci, _), r) in cells.iter().zip(&results) {
            if *ci != i {
                continue;
            }
            match r {
                Ok(m) => {
                    ok.push(m.value);
                    widths.extend(m.gamma_hz);
                }
                Err(e) => {
                    let msg = e.to_string();
                    if !flags.contains(&msg) {
                        flags.push(msg);
                    }
                }
            }
        }
        let (mean, std_err) = if ok.is_empty() { (f64::NAN, f64::NAN) } else { mean_se(&ok) };
        let (gm, gse) = if widths.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_se(&widths);
            (Some(m), Some(s))
        };
        rows.push(SweepRow {
            value,
            gs,
            n_ok: ok.len(),
            n_failed: seeds.len() - ok.len(),
            mean,
            std_err,
            gamma_hz_mean: gm,
            gamma_hz_std_err: gse,
            predicted: predicted(osc, bath, gs, plan),
            flags,
        });
    }

    let (threshold, threshold_error) = match fit_rows(&rows, plan) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SweepReport {
        rows,
        threshold,
        threshold_error,
    })
}

/// Threshold fit over the successful rows. Variances are normalized by the
/// V_p = 0 row; gains keep a free scale.
fn fit_rows(rows: &[SweepRow], plan: &SweepPlan) -> Result<ThresholdFit> {
    if !matches!(plan.variable, SweepVariable::Vp { .. }) {
        return Err(Error::invalid("variable", "threshold fit needs a pump-voltage sweep"));
    }
    let good: Vec<&SweepRow> = rows.iter().filter(|r| r.n_ok >= 2 && r.mean.is_finite()).collect();
    let v: Vec<f64> = good.iter().map(|r| r.value).collect();
    let model = plan.quantity.model();
    let (y, sigma): (Vec<f64>, Vec<f64>) = match plan.quantity {
        SweepQuantity::Variance => {
            let reference = good
                .iter()
                .find(|r| r.value == 0.0)
                .ok_or_else(|| Error::InsufficientData("variance normalization needs a V_p = 0 point".into()))?;
            let (m0, s0) = (reference.mean, reference.std_err);
            good.iter()
                .map(|r| {
                    let y = r.mean / m0;
                    let rel = if r.value == 0.0 {
                        s0 / m0
                    } else {
                        ((r.std_err / r.mean).powi(2) + (s0 / m0).powi(2)).sqrt()
                    };
                    (y, y * rel)
                })
                .unzip()
        }
        _ => good.iter().map(|r| (r.mean, r.std_err)).unzip(),
    };
    let usable = sigma.iter().all(|s| *s > 0.0 && s.is_finite());
    fit_threshold(&v, &y, usable.then_some(sigma.as_slice()), model)
}
