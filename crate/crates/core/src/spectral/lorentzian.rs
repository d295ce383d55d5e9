use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::lm::{self, Problem};
use super::welch::Spectrum;
use crate::{Error, Result};

/// Parameters of floor + (2/π)·area·(γ/2)/((f − c)² + (γ/2)²).
///
/// For a baseband peak (c = 0) on a single-sided spectrum the integral over
/// f ≥ 0 equals `area`, which is therefore the fluctuation variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub area: f64,
    /// Full width at half maximum, Hz.
    pub gamma: f64,
    pub center: f64,
    pub floor: f64,
    /// Covariance of (area, gamma, center, floor); the center row and
    /// column are zero when the center was held fixed.
    pub covariance: [[f64; 4]; 4],
    /// Frequencies with |f − c₀| below this were excluded, Hz.
    pub exclude_halfwidth: f64,
    pub bins_used: usize,
    pub iterations: usize,
}

impl LorentzianFit {
    pub fn area_err(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn gamma_err(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    pub fn center_err(&self) -> f64 {
        self.covariance[2][2].sqrt()
    }

    pub fn floor_err(&self) -> f64 {
        self.covariance[3][3].sqrt()
    }

    pub fn eval(&self, f: f64) -> f64 {
        lorentzian(f, self.area, self.gamma, self.center, self.floor)
    }
}

pub fn lorentzian(f: f64, area: f64, gamma: f64, center: f64, floor: f64) -> f64 {
    let h = 0.5 * gamma;
    let u = f - center;
    floor + 2.0 / PI * area * h / (u * u + h * h)
}

/// Fit controls beyond the exclusion window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Hold the center at this frequency (baseband quadrature spectra use 0).
    pub fixed_center: Option<f64>,
    /// Center of the exclusion window; defaults to the initial center guess.
    pub exclude_center: Option<f64>,
    /// Only fit bins within this many initial linewidths of the center.
    pub span_linewidths: Option<f64>,
}

impl FitOptions {
    /// Baseband peak at 0 Hz with the exclusion window also at 0 Hz.
    pub fn baseband() -> Self {
        Self {
            fixed_center: Some(0.0),
            exclude_center: Some(0.0),
            span_linewidths: None,
        }
    }
}

const REWEIGHT_PASSES: usize = 30;

/// Ordering of the free parameters inside the solver.
struct Model<'a> {
    f: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
    fixed_center: Option<f64>,
}

impl Model<'_> {
    fn unpack(&self, p: &[f64]) -> (f64, f64, f64, f64) {
        match self.fixed_center {
            Some(c) => (p[0], p[1], c, p[2]),
            None => (p[0], p[1], p[2], p[3]),
        }
    }
}

impl Problem for Model<'_> {
    fn n_params(&self) -> usize {
        if self.fixed_center.is_some() {
            3
        } else {
            4
        }
    }

    fn n_residuals(&self) -> usize {
        self.f.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (a, g, c, fl) = self.unpack(p);
        for i in 0..self.f.len() {
            out[i] = (lorentzian(self.f[i], a, g, c, fl) - self.y[i]) * self.w[i];
        }
    }

    fn jacobian(&self, p: &[f64], out: &mut [f64]) {
        let (a, g, c, _) = self.unpack(p);
        let n = self.n_params();
        let h = 0.5 * g;
        for i in 0..self.f.len() {
            let u = self.f[i] - c;
            let den = u * u + h * h;
            let w = self.w[i];
            let row = &mut out[i * n..(i + 1) * n];
            let shape = 2.0 / PI * h / den;
            row[0] = shape * w;
            // d/dγ of (2/π)·A·h/den with h = γ/2
            row[1] = 2.0 / PI * a * 0.5 * (u * u - h * h) / (den * den) * w;
            let d_floor = w;
            match self.fixed_center {
                Some(_) => row[2] = d_floor,
                None => {
                    row[2] = 2.0 / PI * a * h * 2.0 * u / (den * den) * w;
                    row[3] = d_floor;
                }
            }
        }
    }

    fn admissible(&self, p: &[f64]) -> bool {
        p[0] > 0.0 && p[1] > 0.0 && p.iter().all(|v| v.is_finite())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct Guess {
    area: f64,
    gamma: f64,
    center: f64,
    floor: f64,
    peak: f64,
}

/// Moment-style starting point: argmax center, floor from the outer quartiles,
/// width at half of (max − floor), area from the trapezoidal excess integral.
fn initial_guess(f: &[f64], y: &[f64], fixed_center: Option<f64>) -> Guess {
    let imax = (0..y.len()).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap_or(0);
    let center = fixed_center.unwrap_or(f[imax]);
    let mut by_distance: Vec<usize> = (0..f.len()).collect();
    by_distance.sort_by(|&a, &b| (f[a] - center).abs().total_cmp(&(f[b] - center).abs()));
    let outer = &by_distance[by_distance.len() * 3 / 4..];
    let floor = median(outer.iter().map(|&i| y[i]).collect());
    let peak = y[imax];
    let half = floor + 0.5 * (peak - floor);
    let right = (imax..y.len()).find(|&i| y[i] < half).map(|i| f[i]).unwrap_or(f[f.len() - 1]);
    let left = (0..=imax).rev().find(|&i| y[i] < half).map(|i| f[i]);
    let gamma = match (fixed_center, left) {
        (None, Some(l)) => right - l,
        _ => 2.0 * (right - center).abs(),
    }
    .max(f[1] - f[0]);
    let mut excess = 0.0;
    for i in 1..f.len() {
        excess += 0.5 * (y[i] - floor + y[i - 1] - floor) * (f[i] - f[i - 1]);
    }
    // A peak inside the data range is seen from both sides.
    let lo = f[0];
    let hi = f[f.len() - 1];
    let interior = center - lo > gamma && hi - center > gamma;
    let mut area = if interior { 0.5 * excess } else { excess };
    if !(area > 0.0) {
        area = (peak - floor).max(peak) * gamma;
    }
    Guess {
        area,
        gamma,
        center,
        floor,
        peak,
    }
}

/// Least-squares Lorentzian fit of a spectrum, ignoring bins with
/// |f − c₀| < `exclude_halfwidth`. Starts unweighted, then iterates with
/// weights 1/model, matching the relative scatter of averaged periodogram bins.
pub fn lorentzian_fit(spectrum: &Spectrum, exclude_halfwidth: f64, options: &FitOptions) -> Result<LorentzianFit> {
    if !(exclude_halfwidth >= 0.0) {
        return Err(Error::invalid("exclude_halfwidth", "must be >= 0"));
    }
    let vmax = spectrum.values.iter().cloned().fold(0.0, f64::max);
    if !(vmax > 0.0 && vmax.is_finite()) {
        return Err(Error::DegenerateSpectrum("spectrum is empty or zero".into()));
    }
    let all_f = spectrum.frequencies();
    let all_y: Vec<f64> = spectrum.values.iter().map(|v| v / vmax).collect();
    if all_f.len() < 4 {
        return Err(Error::InsufficientData(format!("{} bins", all_f.len())));
    }
    let ex_center = match options.exclude_center {
        Some(c) => c,
        None => initial_guess(&all_f, &all_y, options.fixed_center).center,
    };
    let kept: Vec<usize> = (0..all_f.len()).filter(|&i| (all_f[i] - ex_center).abs() >= exclude_halfwidth).collect();
    if kept.len() < 4 {
        return Err(Error::InsufficientData(format!("{} bins outside the exclusion window", kept.len())));
    }
    let first = initial_guess(
        &kept.iter().map(|&i| all_f[i]).collect::<Vec<_>>(),
        &kept.iter().map(|&i| all_y[i]).collect::<Vec<_>>(),
        options.fixed_center,
    );
    let mut f = Vec::new();
    let mut y = Vec::new();
    let mut near = 0;
    for (fi, yi) in all_f.iter().zip(&all_y) {
        let d = (fi - ex_center).abs();
        if d < exclude_halfwidth {
            continue;
        }
        if (fi - first.center).abs() <= 10.0 * first.gamma {
            near += 1;
        }
        if let Some(span) = options.span_linewidths {
            if (fi - first.center).abs() > span * first.gamma {
                continue;
            }
        }
        f.push(*fi);
        y.push(*yi);
    }
    if near < 20 {
        return Err(Error::InsufficientData(format!(
            "{near} bins within 10 linewidths outside the exclusion window, need 20"
        )));
    }
    let guess = initial_guess(&f, &y, options.fixed_center);
    // Noise level of a K-average periodogram bin is value/√K.
    let k = spectrum.n_averages.max(1) as f64;
    if guess.floor > 0.0 && guess.peak - guess.floor <= 3.0 * guess.floor / k.sqrt() {
        return Err(Error::DegenerateSpectrum("no peak above the floor at 3 sigma".into()));
    }
    if !(guess.peak > guess.floor) {
        return Err(Error::DegenerateSpectrum("no peak above the floor".into()));
    }

    let center0 = if options.fixed_center.is_some() { guess.center } else { first.center };
    let mut p0 = vec![guess.area, guess.gamma];
    if options.fixed_center.is_none() {
        p0.push(center0);
    }
    p0.push(guess.floor);
    let mut model = Model {
        f: &f,
        y: &y,
        w: vec![1.0; f.len()],
        fixed_center: options.fixed_center,
    };
    let mut sol = lm::solve(&model, &p0)?;
    let mut iterations = sol.iterations;
    // Reweight with the current model until the fixed point, where the
    // normal equations coincide with the Gamma (Whittle) likelihood score.
    for _ in 0..REWEIGHT_PASSES {
        let (a, g, c, fl) = model.unpack(&sol.params);
        model.w = f
            .iter()
            .map(|&fi| 1.0 / lorentzian(fi, a, g, c, fl.max(0.0)))
            .collect();
        let next = lm::solve(&model, &sol.params)?;
        iterations += next.iterations;
        let change = next
            .params
            .iter()
            .zip(&sol.params)
            .map(|(x, y)| ((x - y) / y.abs().max(1e-300)).abs())
            .fold(0.0, f64::max);
        sol = next;
        if change < 1e-9 {
            break;
        }
    }
    let (area, gamma, center, floor) = model.unpack(&sol.params);

    let idx: Vec<Option<usize>> = match options.fixed_center {
        Some(_) => vec![Some(0), Some(1), None, Some(2)],
        None => vec![Some(0), Some(1), Some(2), Some(3)],
    };
    // area and floor scale with vmax; gamma and center do not.
    let unit = [vmax, 1.0, 1.0, vmax];
    let mut covariance = [[0.0; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            if let (Some(i), Some(j)) = (idx[r], idx[c]) {
                covariance[r][c] = sol.covariance[i][j] * unit[r] * unit[c];
            }
        }
    }
    let area_err = covariance[0][0].sqrt();
    if !(area * vmax > 3.0 * area_err) || gamma < spectrum.df {
        return Err(Error::DegenerateSpectrum(format!(
            "fitted peak not resolved above the floor at 3 sigma (area {:.3e} ± {area_err:.3e}, width {gamma:.3e} Hz)",
            area * vmax
        )));
    }
    Ok(LorentzianFit {
        area: area * vmax,
        gamma,
        center,
        floor: floor * vmax,
        covariance,
        exclude_halfwidth,
        bins_used: f.len(),
        iterations,
    })
}

/// The fluctuation variance carried by the peak, floor excluded.
pub fn variance_from_fit(fit: &LorentzianFit) -> f64 {
    fit.area
}
