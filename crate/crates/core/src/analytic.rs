//! Closed-form steady-state predictions: quadrature susceptibilities,
//! variances, gain curves, noise spectra, optimal feedback, purity and SNR.
//!
//! Rates are normalized by the intrinsic damping Γ_m throughout (g_s, g_fb,
//! γ_qba, g_meas). Spectra are double-sided in the rotating-frame angular
//! frequency ω, so that ∫ S(ω) dω/2π is the variance.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::model::{
    classical_sigma0_sq, zero_point_amplitude, OscillatorParams, ParametricPhase, QuantumReadout,
    ThermalBath,
};
use crate::{Error, Result};

pub fn db10(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

pub fn db20(ratio: f64) -> f64 {
    20.0 * ratio.log10()
}

/// Damping margin of the anti-squeezed quadrature, 1 − g_s + g_fb.
pub fn stability_margin(gs: f64, gfb: f64) -> f64 {
    1.0 - gs + gfb
}

fn require_stable(gs: f64, gfb: f64) -> Result<f64> {
    let margin = stability_margin(gs, gfb);
    if margin > 0.0 {
        Ok(margin)
    } else {
        Err(Error::Unstable { margin })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureVariances {
    /// Squeezed (amplitude) quadrature variance, m².
    pub sigma1_sq: f64,
    /// Anti-squeezed (phase) quadrature variance, m².
    pub sigma2_sq: f64,
    pub stable: bool,
}

impl QuadratureVariances {
    pub fn product_sqrt(&self) -> f64 {
        (self.sigma1_sq * self.sigma2_sq).sqrt()
    }
}

/// χ₁(ω), χ₂(ω) for the amplitude and phase quadratures. Defined even past
/// the instability; callers check [`stability_margin`] themselves.
pub fn susceptibilities(omega: f64, osc: &OscillatorParams, gs: f64, gfb: f64) -> (Complex64, Complex64) {
    let scale = 2.0 * osc.mass() * osc.omega_m();
    let half = 0.5 * osc.gamma_m();
    let chi = |damping: f64| Complex64::new(1.0, 0.0) / (scale * Complex64::new(half * damping, -omega));
    (chi(1.0 + gs), chi(stability_margin(gs, gfb)))
}

/// Thermal steady state with stabilizing feedback on X₂.
pub fn classical_variances(gs: f64, gfb: f64, sigma0_sq: f64) -> Result<QuadratureVariances> {
    check_gains(gs, gfb)?;
    let margin = require_stable(gs, gfb)?;
    Ok(QuadratureVariances {
        sigma1_sq: sigma0_sq / (1.0 + gs),
        sigma2_sq: sigma0_sq / margin,
        stable: true,
    })
}

/// |X̄₁(g_s) / X̄₁(0)| for the two pump phases.
pub fn amplitude_gain(gs: f64, phase: ParametricPhase) -> Result<f64> {
    if !(gs >= 0.0) {
        return Err(Error::invalid("gs", "must be >= 0"));
    }
    match phase {
        ParametricPhase::Deamplify => Ok(1.0 / (1.0 + gs)),
        ParametricPhase::Amplify if gs < 1.0 => Ok(1.0 / (1.0 - gs)),
        ParametricPhase::Amplify => Err(Error::Threshold { gs }),
    }
}

/// Coherent amplitude X̄₁ = F₀ / (mΩ_mΓ_m(1 + g_s)); X̄₂ = 0.
pub fn steady_state_amplitude(f0: f64, osc: &OscillatorParams, gs: f64) -> f64 {
    f0 / (osc.mass() * osc.omega_m() * osc.gamma_m() * (1.0 + gs))
}

/// Quadrature variances under continuous measurement and feedback.
pub fn quantum_variances(
    gs: f64,
    gfb: f64,
    nbar: f64,
    readout: &QuantumReadout,
    x_zpf: f64,
) -> Result<QuadratureVariances> {
    check_gains(gs, gfb)?;
    let margin = require_stable(gs, gfb)?;
    let xz2 = x_zpf * x_zpf;
    let base = 2.0 * nbar + 1.0 + 2.0 * readout.gamma_qba();
    let heating = feedback_heating(gfb, readout)?;
    Ok(QuadratureVariances {
        sigma1_sq: xz2 * base / (1.0 + gs),
        sigma2_sq: xz2 * (base + heating) / margin,
        stable: true,
    })
}

/// g_fb²/(8 g_meas): phase-quadrature heating from fed-back imprecision noise.
fn feedback_heating(gfb: f64, readout: &QuantumReadout) -> Result<f64> {
    if gfb == 0.0 {
        return Ok(0.0);
    }
    let gm = readout.g_meas();
    if gm <= 0.0 {
        return Err(Error::FeedbackWithoutMeasurement { gfb });
    }
    Ok(gfb * gfb / (8.0 * gm))
}

/// Feedback gain minimizing σ₂², from the stationarity condition
/// g² + 2(1 − g_s)g − 8 g_meas A = 0 with A = 2n̄ + 1 + 2γ_qba.
pub fn optimal_feedback_gain(gs: f64, nbar: f64, readout: &QuantumReadout) -> Result<f64> {
    let gm = readout.g_meas();
    if !(gm > 0.0) {
        return Err(Error::invalid("gamma_qba", "optimal feedback needs g_meas > 0"));
    }
    let a = 2.0 * nbar + 1.0 + 2.0 * readout.gamma_qba();
    let b = 1.0 - gs;
    let c = 8.0 * gm * a;
    let root = (b * b + c).sqrt();
    // Avoid cancellation in -b + root when b > 0.
    Ok(if b > 0.0 { c / (b + root) } else { root - b })
}

/// Gaussian-state purity x_zpf² / (σ₁σ₂).
pub fn purity(variances: &QuadratureVariances, x_zpf: f64) -> f64 {
    x_zpf * x_zpf / variances.product_sqrt()
}

/// Peak S_X₁(0) over the imprecision floor x_zpf²/(2Γ_meas).
pub fn detection_snr(gs: f64, nbar: f64, readout: &QuantumReadout) -> f64 {
    let a = 2.0 * nbar + 1.0 + 2.0 * readout.gamma_qba();
    8.0 * readout.g_meas() * a / ((1.0 + gs) * (1.0 + gs))
}

/// Thermomechanical squeezing (dB10) needed to bring σ₁ down to x_zpf.
pub fn required_squeezing_db(nbar: f64, gamma_qba: f64) -> f64 {
    db10(2.0 * nbar + 1.0 + 2.0 * gamma_qba)
}

/// Optimal-feedback purity, SNR and σ₁²/x_zpf² at one (g_s, γ_qba) point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalPoint {
    pub gfb: f64,
    pub variances: QuadratureVariances,
    pub purity: f64,
    pub snr: f64,
    /// σ₁² in units of x_zpf².
    pub sigma1_zpf: f64,
}

pub fn at_optimal_feedback(gs: f64, nbar: f64, readout: &QuantumReadout) -> Result<OptimalPoint> {
    let gfb = optimal_feedback_gain(gs, nbar, readout)?;
    // Unit x_zpf: everything below is a ratio.
    let variances = quantum_variances(gs, gfb, nbar, readout, 1.0)?;
    Ok(OptimalPoint {
        gfb,
        variances,
        purity: purity(&variances, 1.0),
        snr: detection_snr(gs, nbar, readout),
        sigma1_zpf: variances.sigma1_sq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectrumKind {
    X1,
    X2,
    Y1,
    Y2,
}

/// Model spectrum sampled on a caller-supplied ω grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumModel {
    pub kind: SpectrumKind,
    /// Rotating-frame offsets ω, rad/s.
    pub frequencies: Vec<f64>,
    /// m²·s for X₁/X₂; shot-noise units for Y₁/Y₂.
    pub values: Vec<f64>,
}

/// All noise inputs at one operating point. With `readout = None` the bath is
/// treated classically: x_zpf²(2n̄+1) is replaced by σ₀² and there is no
/// measurement backaction or feedback heating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub osc: OscillatorParams,
    pub bath: ThermalBath,
    pub gs: f64,
    pub gfb: f64,
    pub readout: Option<QuantumReadout>,
}

impl NoiseModel {
    pub fn new(
        osc: OscillatorParams,
        bath: ThermalBath,
        gs: f64,
        gfb: f64,
        readout: Option<QuantumReadout>,
    ) -> Result<Self> {
        check_gains(gs, gfb)?;
        if let Some(r) = &readout {
            feedback_heating(gfb, r)?;
        }
        Ok(Self {
            osc,
            bath,
            gs,
            gfb,
            readout,
        })
    }

    pub fn gamma1(&self) -> f64 {
        self.osc.gamma_m() * (1.0 + self.gs)
    }

    pub fn gamma2(&self) -> f64 {
        self.osc.gamma_m() * stability_margin(self.gs, self.gfb)
    }

    pub fn is_stable(&self) -> bool {
        stability_margin(self.gs, self.gfb) > 0.0
    }

    /// White-noise intensities (m²/s) driving X₁ and X₂, such that each
    /// quadrature variance is intensity / Γᵢ.
    pub fn diffusion(&self) -> (f64, f64) {
        let gm = self.osc.gamma_m();
        match &self.readout {
            None => {
                let d = gm * classical_sigma0_sq(&self.osc, &self.bath);
                (d, d)
            }
            Some(r) => {
                let xz2 = zero_point_amplitude(&self.osc).powi(2);
                let nbar = self.bath.nbar(self.osc.omega_m());
                let base = gm * (2.0 * nbar + 1.0) + 2.0 * gm * r.gamma_qba();
                // Γ_fb²/(8Γ_meas); validated in `new`.
                let heating = if self.gfb == 0.0 {
                    0.0
                } else {
                    gm * self.gfb * self.gfb / (8.0 * r.g_meas())
                };
                (xz2 * base, xz2 * (base + heating))
            }
        }
    }

    pub fn variances(&self) -> Result<QuadratureVariances> {
        require_stable(self.gs, self.gfb)?;
        let (d1, d2) = self.diffusion();
        Ok(QuadratureVariances {
            sigma1_sq: d1 / self.gamma1(),
            sigma2_sq: d2 / self.gamma2(),
            stable: true,
        })
    }

    pub fn s_x1(&self, omega: f64) -> f64 {
        let half = 0.5 * self.gamma1();
        self.diffusion().0 / (omega * omega + half * half)
    }

    pub fn s_x2(&self, omega: f64) -> f64 {
        let half = 0.5 * self.gamma2();
        self.diffusion().1 / (omega * omega + half * half)
    }

    fn gamma_meas_over_xz2(&self) -> Result<(f64, f64)> {
        let r = self
            .readout
            .ok_or_else(|| Error::invalid("readout", "homodyne spectra need a quantum readout"))?;
        if !(r.g_meas() > 0.0) {
            return Err(Error::invalid("gamma_qba", "homodyne spectra need g_meas > 0"));
        }
        let xz2 = zero_point_amplitude(&self.osc).powi(2);
        Ok((r.g_meas() * self.osc.gamma_m(), xz2))
    }

    /// Shot-noise-normalized detected amplitude quadrature.
    pub fn s_y1(&self, omega: f64) -> Result<f64> {
        let (gmeas, xz2) = self.gamma_meas_over_xz2()?;
        Ok(0.5 + gmeas / xz2 * self.s_x1(omega))
    }

    /// Shot-noise-normalized in-loop phase quadrature, including squashing.
    pub fn s_y2(&self, omega: f64) -> Result<f64> {
        let (gmeas, xz2) = self.gamma_meas_over_xz2()?;
        let g2 = self.gamma2();
        let gfb = self.gfb * self.osc.gamma_m();
        let squash = 0.25 * gfb * g2 / (omega * omega + 0.25 * g2 * g2);
        Ok(0.5 + gmeas / xz2 * self.s_x2(omega) - squash)
    }
}

/// Overall S_X₁ or S_X₂ on the given ω grid.
pub fn quadrature_psd(model: &NoiseModel, omegas: &[f64], kind: SpectrumKind) -> Result<SpectrumModel> {
    require_stable(model.gs, model.gfb)?;
    let values = match kind {
        SpectrumKind::X1 => omegas.iter().map(|&w| model.s_x1(w)).collect(),
        SpectrumKind::X2 => omegas.iter().map(|&w| model.s_x2(w)).collect(),
        _ => return Err(Error::invalid("kind", "expected X1 or X2")),
    };
    Ok(SpectrumModel {
        kind,
        frequencies: omegas.to_vec(),
        values,
    })
}

/// Detected homodyne spectra S_Y₁ or S_Y₂ on the given ω grid.
pub fn homodyne_psd(model: &NoiseModel, omegas: &[f64], kind: SpectrumKind) -> Result<SpectrumModel> {
    require_stable(model.gs, model.gfb)?;
    let values = match kind {
        SpectrumKind::Y1 => omegas.iter().map(|&w| model.s_y1(w)).collect::<Result<_>>()?,
        SpectrumKind::Y2 => omegas.iter().map(|&w| model.s_y2(w)).collect::<Result<_>>()?,
        _ => return Err(Error::invalid("kind", "expected Y1 or Y2")),
    };
    Ok(SpectrumModel {
        kind,
        frequencies: omegas.to_vec(),
        values,
    })
}

fn check_gains(gs: f64, gfb: f64) -> Result<()> {
    if !(gs >= 0.0 && gs.is_finite()) {
        return Err(Error::invalid("gs", "must be finite and >= 0"));
    }
    if !(gfb >= 0.0 && gfb.is_finite()) {
        return Err(Error::invalid("gfb", "must be finite and >= 0"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::TWO_PI;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn osc() -> OscillatorParams {
        OscillatorParams::with_q(30e-12, TWO_PI * 1e6, 1e4).unwrap()
    }

    /// Adaptive Simpson on [a, b].
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    /// ∫ S(ω) dω/2π over the real line via ω = s·tan θ.
    fn integrate_psd(s: &dyn Fn(f64) -> f64, scale: f64) -> f64 {
        let g = |t: f64| {
            let c = t.cos();
            s(scale * t.tan()) * scale / (c * c)
        };
        let lim = std::f64::consts::FRAC_PI_2 * (1.0 - 1e-12);
        simpson(&g, -lim, lim, 1e-9 * s(0.0) * scale) / TWO_PI
    }

    #[test]
    fn undriven_susceptibility_real() {
        let o = osc();
        let (c1, c2) = susceptibilities(0.0, &o, 0.0, 0.0);
        let expected = 1.0 / (o.mass() * o.omega_m() * o.gamma_m());
        assert_relative_eq!(c1.re, expected, max_relative = 1e-14);
        assert_eq!(c1.im, 0.0);
        assert_eq!(c1, c2);
    }

    #[test]
    fn susceptibility_half_width() {
        let o = osc();
        let gs = 3.0;
        let peak = susceptibilities(0.0, &o, gs, 0.0).0.norm_sqr();
        // scan for the half-maximum crossing
        let hwhm_expected = o.gamma_m() * (1.0 + gs) / 2.0;
        let (mut lo, mut hi) = (0.0, 10.0 * hwhm_expected);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if susceptibilities(mid, &o, gs, 0.0).0.norm_sqr() > 0.5 * peak {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(lo, hwhm_expected, max_relative = 1e-10);
    }

    #[test]
    fn chi2_diverges_at_threshold() {
        let (_, c2) = susceptibilities(0.0, &osc(), 1.0, 0.0);
        assert!(!c2.is_finite() || c2.norm() > 1e300);
        let (_, near) = susceptibilities(0.0, &osc(), 1.0 - 1e-9, 0.0);
        assert!(near.norm() > 1e8 * susceptibilities(0.0, &osc(), 0.0, 0.0).1.norm());
    }

    #[test]
    fn thermal_state_unsqueezed() {
        let v = classical_variances(0.0, 0.0, 2.5).unwrap();
        assert_eq!((v.sigma1_sq, v.sigma2_sq, v.stable), (2.5, 2.5, true));
    }

    #[test]
    fn three_db_limit() {
        assert!(matches!(classical_variances(1.0, 0.0, 1.0), Err(Error::Unstable { .. })));
        let r = classical_variances(0.999, 0.0, 1.0).unwrap().sigma1_sq;
        assert!(r > 0.5 && r < 0.5005);
        assert_relative_eq!(db10(0.5), -3.0103, max_relative = 1e-4);
    }

    #[test]
    fn beyond_three_db_with_feedback() {
        let v = classical_variances(124.9, 200.0, 1.0).unwrap();
        assert_relative_eq!(v.sigma1_sq, 7.94e-3, max_relative = 1e-3);
        assert_relative_eq!(db10(v.sigma1_sq), -21.0, epsilon = 0.01);
    }

    #[test]
    fn gain_curves() {
        for phase in [ParametricPhase::Deamplify, ParametricPhase::Amplify] {
            assert_eq!(amplitude_gain(0.0, phase).unwrap(), 1.0);
        }
        assert_relative_eq!(amplitude_gain(9.0, ParametricPhase::Deamplify).unwrap(), 0.1);
        assert_relative_eq!(amplitude_gain(0.999, ParametricPhase::Amplify).unwrap(), 1000.0, max_relative = 1e-9);
        assert!(matches!(amplitude_gain(1.0, ParametricPhase::Amplify), Err(Error::Threshold { .. })));
    }

    #[test]
    fn coherent_amplitude() {
        let o = OscillatorParams::with_q(30e-12, TWO_PI * 1.3e6, 0.67e6).unwrap();
        let x0 = steady_state_amplitude(1e-15, &o, 0.0);
        assert_relative_eq!(x0, 1e-15 / (o.mass() * o.omega_m() * o.gamma_m()), max_relative = 1e-14);
        // 1 fN / (30e-12 · (2π·1.3e6)² / 0.67e6) = 3.3474e-13 m
        assert_relative_eq!(x0, 3.3474e-13, max_relative = 1e-4);
        assert_relative_eq!(steady_state_amplitude(1e-15, &o, 1.0), x0 / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn quantum_thermal_state() {
        let r = QuantumReadout::new(0.0, 1.0).unwrap();
        let v = quantum_variances(0.0, 0.0, 7.0, &r, 2.0).unwrap();
        assert_relative_eq!(v.sigma1_sq, 4.0 * 15.0);
        assert_relative_eq!(v.sigma2_sq, 4.0 * 15.0);
    }

    #[test]
    fn quantum_converges_to_classical() {
        let o = osc();
        let r = QuantumReadout::new(0.0, 1.0).unwrap();
        for t in [1.0, 10.0, 300.0] {
            let bath = ThermalBath::new(t).unwrap();
            let n = bath.nbar(o.omega_m());
            let q = quantum_variances(0.5, 0.0, n, &r, o.x_zpf()).unwrap();
            let c = classical_variances(0.5, 0.0, classical_sigma0_sq(&o, &bath)).unwrap();
            assert!((q.sigma1_sq / c.sigma1_sq - 1.0).abs() < 1.0 / (2.0 * n));
        }
    }

    #[test]
    fn zpf_boundary() {
        let r = QuantumReadout::new(37.0, 0.5).unwrap();
        let nbar = 1234.5;
        let gs = 2.0 * nbar + 2.0 * r.gamma_qba();
        let v = quantum_variances(gs, gs, nbar, &r, 3.0).unwrap();
        assert_relative_eq!(v.sigma1_sq, 9.0, max_relative = 1e-14);
    }

    #[test]
    fn feedback_without_measurement_is_error() {
        let r = QuantumReadout::new(0.0, 1.0).unwrap();
        assert!(matches!(
            quantum_variances(0.0, 1.0, 0.0, &r, 1.0),
            Err(Error::FeedbackWithoutMeasurement { .. })
        ));
        assert!(matches!(quantum_variances(2.0, 0.5, 0.0, &r, 1.0), Err(Error::Unstable { .. })));
    }

    fn sigma2_of(g: f64, gs: f64, nbar: f64, r: &QuantumReadout) -> f64 {
        quantum_variances(gs, g, nbar, r, 1.0).unwrap().sigma2_sq
    }

    /// Brute-force minimizer: log scan above the stability boundary, then golden section.
    fn scan_min(gs: f64, nbar: f64, r: &QuantumReadout) -> f64 {
        let lo = (gs - 1.0).max(0.0);
        let at = |u: f64| lo + 10f64.powf(u);
        let (mut best_u, mut best) = (0.0, f64::INFINITY);
        let mut u = -8.0;
        while u < 8.0 {
            let v = sigma2_of(at(u), gs, nbar, r);
            if v < best {
                best = v;
                best_u = u;
            }
            u += 1e-3;
        }
        let (mut a, mut b) = (best_u - 2e-3, best_u + 2e-3);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if sigma2_of(at(c), gs, nbar, r) < sigma2_of(at(d), gs, nbar, r) {
                b = d;
            } else {
                a = c;
            }
        }
        at(0.5 * (a + b))
    }

    #[test]
    fn optimal_gain_matches_scan() {
        let nbar = 3.0;
        for i in 0..10 {
            for j in 0..10 {
                let gs = 1e3 * i as f64 / 9.0;
                let gq = (1e3 * j as f64 / 9.0).max(1e-2);
                let r = QuantumReadout::new(gq, 0.77).unwrap();
                let closed = optimal_feedback_gain(gs, nbar, &r).unwrap();
                let brute = scan_min(gs, nbar, &r);
                assert!(
                    (closed - brute).abs() <= 1e-3 * closed,
                    "gs={gs} gq={gq}: {closed} vs {brute}"
                );
                assert!(stability_margin(gs, closed) > 0.0);
                let at = quantum_variances(gs, closed, nbar, &r, 1.0).unwrap().sigma2_sq;
                assert_relative_eq!(at, closed / (4.0 * r.g_meas()), max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn optimal_gain_vanishes_without_noise() {
        let r = QuantumReadout::new(1e-12, 1.0).unwrap();
        assert!(optimal_feedback_gain(0.0, 0.0, &r).unwrap() < 1e-10);
    }

    #[test]
    fn purity_limits() {
        let pure = QuadratureVariances {
            sigma1_sq: 4.0,
            sigma2_sq: 4.0,
            stable: true,
        };
        assert_relative_eq!(purity(&pure, 2.0), 1.0);
        let n = 12.0;
        let thermal = QuadratureVariances {
            sigma1_sq: 2.0 * n + 1.0,
            sigma2_sq: 2.0 * n + 1.0,
            stable: true,
        };
        assert_relative_eq!(purity(&thermal, 1.0), 1.0 / (2.0 * n + 1.0));
    }

    #[test]
    fn purity_approaches_sqrt_eta_deep_in_corner() {
        let r = QuantumReadout::new(1e9, 0.77).unwrap();
        let p = at_optimal_feedback(1e12, 2.08e5, &r).unwrap().purity;
        assert_relative_eq!(p, 0.77f64.sqrt(), max_relative = 1e-3);
    }

    #[test]
    fn snr_contour_and_limits() {
        let r = QuantumReadout::new(10.0, 0.5).unwrap();
        let nbar = 2.0;
        let a = 2.0 * nbar + 1.0 + 2.0 * r.gamma_qba();
        let gs = (8.0 * r.g_meas() * a).sqrt() - 1.0;
        assert_relative_eq!(detection_snr(gs, nbar, &r), 1.0, max_relative = 1e-12);
        let tiny = QuantumReadout::new(1e-15, 0.5).unwrap();
        assert!(detection_snr(0.0, nbar, &tiny) < 1e-12);
        let mut prev = f64::INFINITY;
        for k in 0..100 {
            let s = detection_snr(k as f64 * 3.7, nbar, &r);
            assert!(s < prev);
            prev = s;
        }
    }

    #[test]
    fn psd_integrates_to_variance() {
        let o = osc();
        let bath = ThermalBath::new(4.0).unwrap();
        for (gs, gfb, readout) in [
            (0.0, 0.0, None),
            (5.0, 10.0, None),
            (50.0, 100.0, Some(QuantumReadout::new(30.0, 0.77).unwrap())),
        ] {
            let m = NoiseModel::new(o, bath, gs, gfb, readout).unwrap();
            let v = m.variances().unwrap();
            let i1 = integrate_psd(&|w| m.s_x1(w), m.gamma1());
            let i2 = integrate_psd(&|w| m.s_x2(w), m.gamma2());
            assert!((i1 / v.sigma1_sq - 1.0).abs() < 1e-3, "{i1} vs {}", v.sigma1_sq);
            assert!((i2 / v.sigma2_sq - 1.0).abs() < 1e-3);
            if let Some(r) = readout {
                let q = quantum_variances(gs, gfb, bath.nbar(o.omega_m()), &r, o.x_zpf()).unwrap();
                assert_relative_eq!(q.sigma1_sq, v.sigma1_sq, max_relative = 1e-12);
                assert_relative_eq!(q.sigma2_sq, v.sigma2_sq, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn psd_lorentzian_width_and_peak_scaling() {
        let o = osc();
        let bath = ThermalBath::new(300.0).unwrap();
        let base = NoiseModel::new(o, bath, 0.0, 0.0, None).unwrap();
        for gs in [0.5, 3.0, 20.0] {
            let m = NoiseModel::new(o, bath, gs, 2.0 * gs, None).unwrap();
            let hw = m.gamma1() / 2.0;
            assert_relative_eq!(m.s_x1(hw), m.s_x1(0.0) / 2.0, max_relative = 1e-12);
            assert_relative_eq!(m.s_x1(0.0), base.s_x1(0.0) / (1.0 + gs).powi(2), max_relative = 1e-12);
        }
        let spec = quadrature_psd(&base, &[-3.0, 0.0, 3.0], SpectrumKind::X1).unwrap();
        assert_eq!(spec.values[0], spec.values[2]);
    }

    #[test]
    fn open_loop_homodyne_has_no_squashing() {
        let o = osc();
        let r = QuantumReadout::new(5.0, 0.6).unwrap();
        let m = NoiseModel::new(o, ThermalBath::new(0.1).unwrap(), 0.4, 0.0, Some(r)).unwrap();
        let gmeas = r.g_meas() * o.gamma_m();
        for w in [0.0, 1.0, 100.0] {
            let expected = 0.5 + gmeas / o.x_zpf().powi(2) * m.s_x2(w);
            assert_relative_eq!(m.s_y2(w).unwrap(), expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn in_loop_squashing_below_shot_noise() {
        let o = osc();
        let r = QuantumReadout::new(1e-3, 1.0).unwrap();
        let m = NoiseModel::new(o, ThermalBath::new(0.0).unwrap(), 0.0, 1.0, Some(r)).unwrap();
        assert!(m.s_y2(0.0).unwrap() < 0.5);
    }

    proptest! {
        #[test]
        fn squashed_spectrum_bounded_below(
            gs in 0.0f64..100.0, extra in 1e-3f64..100.0, gq in 1e-4f64..1e4,
            eta in 0.01f64..1.0, t in 0.0f64..300.0, w in -1e5f64..1e5,
        ) {
            let gfb = (gs - 1.0).max(0.0) + extra;
            let r = QuantumReadout::new(gq, eta).unwrap();
            let m = NoiseModel::new(osc(), ThermalBath::new(t).unwrap(), gs, gfb, Some(r)).unwrap();
            let s = m.s_y2(w).unwrap();
            prop_assert!(s >= 0.0);
            let ratio = gfb / stability_margin(gs, gfb);
            let bound = 0.5 * (1.0 - ratio).powi(2);
            let s0 = m.s_y2(0.0).unwrap();
            prop_assert!(s0 >= bound * (1.0 - 1e-9) - 1e-12);
        }

        #[test]
        fn sigma1_independent_of_feedback_and_decreasing(gs in 0.0f64..1e3, d in 1e-3f64..10.0, f1 in 0.0f64..1e3, f2 in 0.0f64..1e3) {
            let a = classical_variances(gs, gs + f1, 1.0).unwrap();
            let b = classical_variances(gs, gs + f2, 1.0).unwrap();
            prop_assert_eq!(a.sigma1_sq, b.sigma1_sq);
            let c = classical_variances(gs + d, gs + d + f1, 1.0).unwrap();
            prop_assert!(c.sigma1_sq < a.sigma1_sq);
        }

        #[test]
        fn heisenberg_at_optimum(
            lgs in -3.0f64..8.0, lgq in -4.0f64..8.0, ln in -3.0f64..6.0, eta in 1e-3f64..1.0,
        ) {
            let r = QuantumReadout::new(10f64.powf(lgq), eta).unwrap();
            let p = at_optimal_feedback(10f64.powf(lgs), 10f64.powf(ln), &r).unwrap();
            prop_assert!(p.variances.product_sqrt() >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn stable_flag_flips_at_margin() {
        assert!(classical_variances(3.0, 2.0 + 1e-9, 1.0).is_ok());
        assert!(classical_variances(3.0, 2.0, 1.0).is_err());
        let v = classical_variances(3.0, 2.0 + 1e-9, 1.0).unwrap();
        assert!(v.sigma2_sq > 1e8);
    }

    #[test]
    fn required_squeezing_at_10k() {
        let n = crate::model::occupancy(10.0, TWO_PI * 1e6);
        assert_relative_eq!(required_squeezing_db(n, 0.0), 56.2, epsilon = 0.05);
    }
}
