//! Electrostatic actuator model for capacitive parametric driving.
//!
//! Displacement `x` is measured towards the electrode, so the gap is d₀ − x and
//! C(x) = C₀ + α/(d₀ − x) grows as the membrane approaches the electrode.

use serde::{Deserialize, Serialize};

use crate::analytic::db10;
use crate::constants::TWO_PI;
use crate::model::OscillatorParams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacitorGeometry {
    /// Geometry constant α, F·m.
    pub alpha: f64,
    /// Self-capacitance C₀, F.
    pub c0: f64,
    /// Rest separation d₀, m.
    pub d0: f64,
    /// Bias voltage, V.
    pub vdc: f64,
    /// Peak modulation amplitude, V.
    pub vp: f64,
}

impl CapacitorGeometry {
    pub fn new(alpha: f64, c0: f64, d0: f64, vdc: f64, vp: f64) -> Result<Self> {
        let checks: [(&'static str, f64, bool); 5] = [
            ("alpha", alpha, alpha > 0.0),
            ("c0", c0, c0 >= 0.0),
            ("d0", d0, d0 > 0.0),
            ("vdc", vdc, vdc >= 0.0),
            ("vp", vp, vp >= 0.0),
        ];
        for (name, v, ok) in checks {
            if !ok || !v.is_finite() {
                return Err(Error::invalid(name, format!("out of range: {v}")));
            }
        }
        Ok(Self { alpha, c0, d0, vdc, vp })
    }

    pub fn with_voltages(&self, vdc: f64, vp: f64) -> Result<Self> {
        Self::new(self.alpha, self.c0, self.d0, vdc, vp)
    }

    fn gap(&self, x: f64) -> Result<f64> {
        let gap = self.d0 - x;
        if gap > 0.0 {
            Ok(gap)
        } else {
            Err(Error::GapClosed { x, d0: self.d0 })
        }
    }

    /// dC/dx = α/(d₀ − x)².
    pub fn dc_dx(&self, x: f64) -> Result<f64> {
        let g = self.gap(x)?;
        Ok(self.alpha / (g * g))
    }

    /// d²C/dx² = 2α/(d₀ − x)³.
    pub fn d2c_dx2(&self, x: f64) -> Result<f64> {
        let g = self.gap(x)?;
        Ok(2.0 * self.alpha / (g * g * g))
    }
}

/// Linear frequency tuning of a piezo-actuated resonator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiezoTuning {
    /// Hz per volt of DC offset.
    pub slope: f64,
}

pub fn capacitance(x: f64, geom: &CapacitorGeometry) -> Result<f64> {
    Ok(geom.c0 + geom.alpha / geom.gap(x)?)
}

/// Amplitude of the stiffness modulation at the pump frequency, |C''|·V_DC·V_p,
/// from the cross term of V²(t) = (V_DC + V_p cos Ω_p t)².
pub fn parametric_stiffness(geom: &CapacitorGeometry, x_eq: f64) -> Result<f64> {
    Ok(geom.d2c_dx2(x_eq)?.abs() * geom.vdc * geom.vp)
}

/// V_th = 2k_m / (Q·V_DC·|C''(x_eq)|).
pub fn threshold_voltage(osc: &OscillatorParams, geom: &CapacitorGeometry, x_eq: f64) -> Result<f64> {
    if geom.vdc <= 0.0 {
        return Err(Error::ZeroBias);
    }
    let c2 = geom.d2c_dx2(x_eq)?;
    Ok(2.0 * osc.k_m() / (osc.q() * geom.vdc * c2.abs()))
}

/// Voltage at which electrostatic softening cancels the spring, √(2k_m/|C''|).
pub fn softening_collapse_voltage(osc: &OscillatorParams, geom: &CapacitorGeometry, x_eq: f64) -> Result<f64> {
    Ok((2.0 * osc.k_m() / geom.d2c_dx2(x_eq)?.abs()).sqrt())
}

/// Ω_m·√(1 − |C''(x_eq)|·V²/(2k_m)).
pub fn frequency_tuning_capacitive(
    vdc: f64,
    osc: &OscillatorParams,
    geom: &CapacitorGeometry,
    x_eq: f64,
) -> Result<f64> {
    let radicand = 1.0 - geom.d2c_dx2(x_eq)?.abs() * vdc * vdc / (2.0 * osc.k_m());
    if radicand <= 0.0 {
        return Err(Error::OverSoftening { radicand });
    }
    Ok(osc.omega_m() * radicand.sqrt())
}

pub fn frequency_tuning_piezo(vdc: f64, tuning: &PiezoTuning, osc: &OscillatorParams) -> f64 {
    osc.omega_m() + TWO_PI * tuning.slope * vdc
}

/// Stable static deflection under bias: k_m·x = ½·C'(x)·V_DC².
///
/// The force residual is monotone on [0, x_pi] where x_pi = d₀/3 is the
/// pull-in point; a root exists there iff V_DC is below the pull-in voltage.
pub fn static_equilibrium(osc: &OscillatorParams, geom: &CapacitorGeometry, vdc: f64) -> Result<f64> {
    if !(vdc >= 0.0) {
        return Err(Error::invalid("vdc", "must be >= 0"));
    }
    if vdc == 0.0 {
        return Ok(0.0);
    }
    let k = osc.k_m();
    let v2 = vdc * vdc;
    let residual = |x: f64| k * x - 0.5 * geom.alpha * v2 / ((geom.d0 - x) * (geom.d0 - x));
    let slope = |x: f64| k - geom.alpha * v2 / (geom.d0 - x).powi(3);

    // Residual is concave on [0, d0), maximal where slope = 0.
    let x_peak = geom.d0 - (geom.alpha * v2 / k).cbrt();
    if x_peak <= 0.0 || residual(x_peak) < 0.0 {
        return Err(Error::PullIn { vdc });
    }
    let (mut lo, mut hi) = (0.0, x_peak);
    let mut x = 0.0;
    let tol = 1e-15 * geom.d0;
    for _ in 0..200 {
        let r = residual(x);
        if r.abs() < 1e-13 * k * geom.d0 {
            break;
        }
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = slope(x);
        let newton = x - r / d;
        x = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < tol {
            break;
        }
    }
    if slope(x) <= 0.0 {
        return Err(Error::PullIn { vdc });
    }
    Ok(x)
}

/// Pull-in voltage √(8k_m·d₀³ / 27α) for the 1/gap capacitor.
pub fn pull_in_voltage(osc: &OscillatorParams, geom: &CapacitorGeometry) -> f64 {
    (8.0 * osc.k_m() * geom.d0.powi(3) / (27.0 * geom.alpha)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellFlag {
    Ok,
    Pullin,
    Softening,
}

impl CellFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            CellFlag::Ok => "ok",
            CellFlag::Pullin => "pullin",
            CellFlag::Softening => "softening",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezingCell {
    pub vdc: f64,
    pub vp: f64,
    /// NaN when no equilibrium exists.
    pub x_eq: f64,
    pub gs: f64,
    /// 10·log₁₀(1 + g_s); NaN on pull-in.
    pub squeezing_db: f64,
    pub flag: CellFlag,
}

/// σ₁ squeezing achievable at one bias point, assuming X₂ is stabilized.
pub fn squeezing_cell(osc: &OscillatorParams, geom: &CapacitorGeometry, vdc: f64, vp: f64) -> SqueezingCell {
    let nan_cell = |flag| SqueezingCell {
        vdc,
        vp,
        x_eq: f64::NAN,
        gs: f64::NAN,
        squeezing_db: f64::NAN,
        flag,
    };
    let Ok(g) = geom.with_voltages(vdc, vp) else {
        return nan_cell(CellFlag::Pullin);
    };
    let x_eq = match static_equilibrium(osc, &g, vdc) {
        Ok(x) => x,
        Err(_) => return nan_cell(CellFlag::Pullin),
    };
    let flag = match frequency_tuning_capacitive(vdc, osc, &g, x_eq) {
        Ok(_) => CellFlag::Ok,
        Err(_) => CellFlag::Softening,
    };
    let gs = parametric_stiffness(&g, x_eq)
        .map(|kp| osc.gs_from_kp(kp))
        .unwrap_or(f64::NAN);
    SqueezingCell {
        vdc,
        vp,
        x_eq,
        gs,
        squeezing_db: db10(1.0 + gs),
        flag,
    }
}

/// Row-major map: outer index over `vdc_grid`, inner over `vp_grid`.
pub fn squeezing_map(
    vdc_grid: &[f64],
    vp_grid: &[f64],
    osc: &OscillatorParams,
    geom: &CapacitorGeometry,
) -> Result<Vec<SqueezingCell>> {
    if vdc_grid.is_empty() || vp_grid.is_empty() {
        return Err(Error::invalid("grid", "voltage grids must be non-empty"));
    }
    let cells: Vec<(f64, f64)> = vdc_grid
        .iter()
        .flat_map(|&vdc| vp_grid.iter().map(move |&vp| (vdc, vp)))
        .collect();
    Ok(crate::sweep::map_cells(&cells, |&(vdc, vp)| squeezing_cell(osc, geom, vdc, vp)))
}
