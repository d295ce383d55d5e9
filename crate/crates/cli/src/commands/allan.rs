//! Allan deviation of a recorded frequency series.

use std::io::Write;

use squeezesim_core::spectral::{allan_deviation, octave_taus};

use super::fit::read_csv;
use super::Context;
use crate::config::quantity_si;
use crate::error::CliError;
use crate::output::num;
use crate::units::Dim;

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.loaded.config;
    let a = c.allan.as_ref().ok_or_else(|| CliError::Validation("allan: section required".into()))?;
    let path = ctx.loaded.resolve(&a.input);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let table = read_csv(&text, &path)?;
    let rate = table
        .sample_rate
        .ok_or_else(|| CliError::Validation(format!("{}: missing `# sample_rate_hz: <rate>` header", path.display())))?;
    // Named frequency column if present, else the last column.
    let freq = table
        .column("f_hz")
        .or_else(|| table.names.last().and_then(|n| table.column(n)))
        .ok_or_else(|| CliError::Validation(format!("{}: no data", path.display())))?;
    let f0 = match &a.f0 {
        Some(q) => quantity_si(q, Dim::Frequency, "allan.f0")?,
        None => freq.iter().sum::<f64>() / freq.len() as f64,
    };
    let taus = match &a.taus {
        Some(t) => t.clone(),
        None => octave_taus(freq.len(), rate, a.min_bins.unwrap_or(3)),
    };
    if taus.is_empty() {
        return Err(CliError::Validation(format!("{}: record too short for any averaging time", path.display())));
    }
    let dev = allan_deviation(&freq, f0, &taus, rate)?;

    let mut w = ctx.csv()?;
    writeln!(w, "# f0_hz: {}, sample_rate_hz: {}, samples: {}", num(f0), num(rate), freq.len())?;
    writeln!(w, "tau_s,allan_dev")?;
    for (t, d) in taus.iter().zip(&dev) {
        writeln!(w, "{},{}", num(*t), num(*d))?;
    }
    w.flush()?;
    Ok(())
}
