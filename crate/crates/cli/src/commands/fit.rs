//! Welch spectrum and baseband Lorentzian fit of one channel of a trace.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use squeezesim_core::simulate::{read_binary, simulate_rotating, RotatingRun, TraceData};
use squeezesim_core::spectral::{lorentzian_fit, variance_from_fit, welch_psd, FitOptions, LorentzianFit};

use super::Context;
use crate::config::{quantity_si, Channel};
use crate::error::CliError;
use crate::output::{sink, Provenance};
use crate::units::Dim;

/// Samples of one channel with their spacing.
pub struct Series {
    pub dt: f64,
    pub samples: Vec<f64>,
}

#[derive(Serialize)]
struct Report<'a> {
    tool_version: &'static str,
    config_sha256: &'a str,
    seeds: &'a [u64],
    channel: Channel,
    samples: usize,
    dt_s: f64,
    segment_len: usize,
    n_averages: usize,
    df_hz: f64,
    exclude_halfwidth_hz: f64,
    exclude_center_hz: f64,
    variance_m2: f64,
    variance_err_m2: f64,
    linewidth_hz: f64,
    linewidth_err_hz: f64,
    floor_m2_per_hz: f64,
    floor_err_m2_per_hz: f64,
    fit: &'a LorentzianFit,
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.loaded.config;
    let f = c.fit.clone().unwrap_or_default();
    let seeds = ctx.seeds();
    let series = match &f.input {
        Some(p) => load_series(&ctx.loaded.resolve(p), f.channel)?,
        None => simulated(ctx, f.channel)?,
    };
    let settle = match &f.settle {
        Some(q) => quantity_si(q, Dim::Time, "fit.settle")?,
        None => 0.0,
    };
    let skip = ((settle / series.dt).ceil() as usize).min(series.samples.len());
    let x = &series.samples[skip..];

    let segment_len = match f.segment_len {
        Some(n) => n,
        // Largest power of two giving at least 8 segments, capped at 2^16.
        None => {
            let mut n = 64usize;
            while n * 2 <= (x.len() / 8).min(1 << 16) {
                n *= 2;
            }
            n
        }
    };
    let overlap = f.overlap.unwrap_or(0.5);
    if !(0.0..1.0).contains(&overlap) {
        return Err(CliError::field("fit.overlap", "must lie in [0, 1)"));
    }
    let spectrum = welch_psd(x, series.dt, segment_len, overlap, c.window())?;

    // Default exclusion: five PLL bandwidths when a loop is configured,
    // otherwise 1.5 bins around DC.
    let pll_bw = c
        .feedback
        .as_ref()
        .and_then(|fb| fb.pll.as_ref())
        .map(|p| quantity_si(&p.bandwidth, Dim::Frequency, "feedback.pll.bandwidth"))
        .transpose()?;
    let exclude = match (&f.exclude, pll_bw) {
        (Some(q), _) => quantity_si(q, Dim::Frequency, "fit.exclude")?,
        (None, Some(bw)) => 5.0 * bw,
        (None, None) => 1.5 * spectrum.df,
    };
    let options = FitOptions {
        span_linewidths: Some(f.span_linewidths.unwrap_or(10.0)),
        ..FitOptions::baseband()
    };
    let fit = lorentzian_fit(&spectrum, exclude, &options)?;

    if let Some(path) = ctx.out.as_deref() {
        let mut w = sink(Some(path))?;
        Provenance {
            command: ctx.command,
            config_hash: &ctx.hash,
            seeds: &seeds,
        }
        .write(&mut w)?;
        writeln!(w, "# n_averages: {}", spectrum.n_averages)?;
        spectrum.write_csv(&mut w)?;
        w.flush()?;
    }

    let report = Report {
        tool_version: env!("CARGO_PKG_VERSION"),
        config_sha256: &ctx.hash,
        seeds: &seeds,
        channel: f.channel,
        samples: x.len(),
        dt_s: series.dt,
        segment_len,
        n_averages: spectrum.n_averages,
        df_hz: spectrum.df,
        exclude_halfwidth_hz: exclude,
        exclude_center_hz: 0.0,
        variance_m2: variance_from_fit(&fit),
        variance_err_m2: fit.area_err(),
        linewidth_hz: fit.gamma,
        linewidth_err_hz: fit.gamma_err(),
        floor_m2_per_hz: fit.floor,
        floor_err_m2_per_hz: fit.floor_err(),
        fit: &fit,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{json}")?;
    Ok(())
}

fn simulated(ctx: &Context, channel: Channel) -> Result<Series, CliError> {
    let c = &ctx.loaded.config;
    let seeds = ctx.seeds();
    let [seed] = seeds[..] else {
        return Err(CliError::field("run.seeds", "fitting a simulated trace takes exactly one seed"));
    };
    if channel == Channel::X {
        return Err(CliError::field("fit.channel", "simulated rotating-frame traces have x1 and x2 only"));
    }
    let osc = c.oscillator()?;
    let bath = c.bath()?;
    let drive = c.drive(&osc)?;
    let gfb = c.gfb()?;
    let duration = c
        .run_time("duration", Dim::Time)?
        .ok_or_else(|| CliError::field("run.duration", "required when fit.input is absent"))?;
    let dt = c.run_time("dt", Dim::Time)?.unwrap_or(RotatingRun::max_dt(&osc, drive.gs, gfb));
    let mut run = RotatingRun::new(duration, dt, seed);
    run.phase = drive.phase;
    run.f0 = drive.f0;
    if let Some(out) = c.run_time("output_dt", Dim::Time)? {
        run.decimate = ((out / dt).round() as usize).max(1);
    }
    let readout = c.readout(&osc)?;
    let t = simulate_rotating(&osc, &bath, drive.gs, gfb, readout.as_ref(), &run)?;
    if t.divergent {
        return Err(CliError::Numerical("simulated trajectory diverged".into()));
    }
    Ok(Series {
        dt: t.dt,
        samples: if channel == Channel::X1 { t.x1 } else { t.x2 },
    })
}

pub fn load_series(path: &Path, channel: Channel) -> Result<Series, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    if bytes.starts_with(b"SQZT") {
        let (dt, _, data) =
            read_binary(bytes.as_slice()).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let samples = match (data, channel) {
            (TraceData::Quadratures { x1, .. }, Channel::X1) => x1,
            (TraceData::Quadratures { x2, .. }, Channel::X2) => x2,
            (TraceData::Position { x }, Channel::X) => x,
            _ => return Err(CliError::field("fit.channel", "channel not present in the binary trace")),
        };
        return Ok(Series { dt, samples });
    }
    let text = String::from_utf8(bytes).map_err(|_| CliError::Validation(format!("{}: not UTF-8", path.display())))?;
    let name = match channel {
        Channel::X1 => "x1_m",
        Channel::X2 => "x2_m",
        Channel::X => "x_m",
    };
    let table = read_csv(&text, path)?;
    let col = table.column(name).ok_or_else(|| {
        CliError::Validation(format!("{}: no `{name}` column", path.display()))
    })?;
    let dt = match table.sample_rate {
        Some(r) => 1.0 / r,
        None => {
            let t = table.column("t_s").ok_or_else(|| {
                CliError::Validation(format!("{}: need a `t_s` column or a sample_rate_hz comment", path.display()))
            })?;
            if t.len() < 2 {
                return Err(CliError::Validation(format!("{}: fewer than two samples", path.display())));
            }
            t[1] - t[0]
        }
    };
    if !(dt > 0.0) {
        return Err(CliError::Validation(format!("{}: non-positive sample spacing", path.display())));
    }
    Ok(Series { dt, samples: col })
}

/// Numeric CSV with an optional `# sample_rate_hz: r` comment.
#[derive(Debug)]
pub struct Table {
    pub sample_rate: Option<f64>,
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub fn read_csv(text: &str, path: &Path) -> Result<Table, CliError> {
    let bad = |line: usize, why: String| CliError::Validation(format!("{}:{line}: {why}", path.display()));
    let mut sample_rate = None;
    let mut names: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once([':', '=']) {
                if k.trim() == "sample_rate_hz" {
                    let r: f64 = v.trim().parse().map_err(|_| bad(n, format!("bad sample rate `{}`", v.trim())))?;
                    if !(r > 0.0 && r.is_finite()) {
                        return Err(bad(n, "sample rate must be positive".into()));
                    }
                    sample_rate = Some(r);
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Some(cols) = &names else {
            if fields.iter().all(|f| f.parse::<f64>().is_err()) {
                names = Some(fields.iter().map(|s| s.to_string()).collect());
                continue;
            }
            // Headerless numeric data: name columns by position.
            names = Some((0..fields.len()).map(|k| format!("c{k}")).collect());
            rows.push(parse_row(&fields, fields.len()).map_err(|why| bad(n, why))?);
            continue;
        };
        rows.push(parse_row(&fields, cols.len()).map_err(|why| bad(n, why))?);
    }
    Ok(Table {
        sample_rate,
        names: names.unwrap_or_default(),
        rows,
    })
}

fn parse_row(fields: &[&str], width: usize) -> Result<Vec<f64>, String> {
    if fields.len() != width {
        return Err(format!("expected {width} fields, found {}", fields.len()));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("`{f}` is not a finite number"))
        })
        .collect()
}
