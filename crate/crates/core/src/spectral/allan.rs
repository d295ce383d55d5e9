use crate::{Error, Result};

/// Non-overlapping Allan deviation of a frequency record:
/// σ_A(τ)² = Σ (f̄ₙ₊₁ − f̄ₙ)² / (2(N − 1)·f₀²) over N consecutive τ-averages.
pub fn allan_deviation(freq: &[f64], f0: f64, taus: &[f64], sample_rate: f64) -> Result<Vec<f64>> {
    if !(f0 != 0.0 && f0.is_finite()) {
        return Err(Error::invalid("f0", "must be finite and non-zero"));
    }
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(Error::invalid("sample_rate", "must be positive"));
    }
    taus.iter()
        .map(|&tau| {
            let m_exact = tau * sample_rate;
            let m = m_exact.round();
            if !(m >= 1.0) || (m_exact - m).abs() > 1e-9 * m {
                return Err(Error::invalid(
                    "tau",
                    format!("{tau} s is not an integer number of samples at {sample_rate} Sa/s"),
                ));
            }
            let m = m as usize;
            let bins = freq.len() / m;
            if bins < 3 {
                return Err(Error::InsufficientData(format!(
                    "tau = {tau} s gives {bins} averaging bins, need at least 3"
                )));
            }
            let means: Vec<f64> = freq
                .chunks_exact(m)
                .take(bins)
                .map(|c| c.iter().sum::<f64>() / m as f64)
                .collect();
            let sum: f64 = means.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
            Ok((sum / (2.0 * (bins - 1) as f64)).sqrt() / f0.abs())
        })
        .collect()
}

/// Averaging times m/sample_rate for m = 1, 2, 4, … with at least `min_bins` bins.
pub fn octave_taus(len: usize, sample_rate: f64, min_bins: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut m = 1usize;
    while len / m >= min_bins.max(3) {
        out.push(m as f64 / sample_rate);
        m *= 2;
    }
    out
}
