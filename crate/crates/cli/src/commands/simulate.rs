//! Single-seed time-domain runs: rotating frame, full position, or position
//! with lock-in and PLL.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};

use squeezesim_core::simulate::{
    run_pll, simulate_position, simulate_rotating, write_binary, LockinSettings, PllRun, PositionRun,
    RotatingRun, TraceData,
};

use super::Context;
use crate::config::{quantity_si, SimMode, TraceFormat};
use crate::error::CliError;
use crate::output::num;
use crate::units::Dim;

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.loaded.config;
    let sim = c.simulate.clone().unwrap_or_default();
    let osc = c.oscillator()?;
    let bath = c.bath()?;
    let drive = c.drive(&osc)?;
    let gfb = c.gfb()?;
    let seeds = ctx.seeds();
    let [seed] = seeds[..] else {
        return Err(CliError::field("run.seeds", "simulate takes exactly one seed"));
    };
    let duration = c
        .run_time("duration", Dim::Time)?
        .ok_or_else(|| CliError::field("run.duration", "required by simulate"))?;
    if sim.format == TraceFormat::Binary && ctx.out.is_none() {
        return Err(CliError::Validation("--out is required for binary output".into()));
    }

    match sim.mode {
        SimMode::Rotating => {
            let dt = c.run_time("dt", Dim::Time)?.unwrap_or(RotatingRun::max_dt(&osc, drive.gs, gfb));
            let mut run = RotatingRun::new(duration, dt, seed);
            run.phase = drive.phase;
            run.f0 = drive.f0;
            run.noise = sim.thermal;
            run.decimate = decimation(c.run_time("output_dt", Dim::Time)?, dt)?;
            let readout = c.readout(&osc)?;
            let trace = simulate_rotating(&osc, &bath, drive.gs, gfb, readout.as_ref(), &run)?;
            if trace.divergent {
                eprintln!("warning: trajectory diverged (unstable gains); trace truncated");
            }
            if sim.format == TraceFormat::Binary {
                let data = TraceData::Quadratures {
                    x1: trace.x1.clone(),
                    x2: trace.x2.clone(),
                };
                return binary(ctx, trace.dt, seed, &data);
            }
            let mut w = ctx.csv()?;
            writeln!(w, "# sample_rate_hz: {}", num(1.0 / trace.dt))?;
            trace.write_csv(&mut w)?;
            w.flush()?;
        }
        SimMode::Position => {
            let dt = c.run_time("dt", Dim::Time)?.unwrap_or(PositionRun::default_dt(osc.omega_m()));
            let mut run = PositionRun::new(duration, dt, seed, osc.omega_m());
            run.gfb = gfb;
            run.thermal = sim.thermal;
            let trace = simulate_position(&osc, &bath, &drive, drive.kp(&osc), &run)?;
            if sim.format == TraceFormat::Binary {
                let data = TraceData::Position { x: trace.x.clone() };
                return binary(ctx, trace.dt, seed, &data);
            }
            let mut w = ctx.csv()?;
            writeln!(w, "# sample_rate_hz: {}", num(1.0 / trace.dt))?;
            trace.write_csv(&mut w)?;
            w.flush()?;
        }
        SimMode::Pll => {
            let gains = c
                .pll(&osc)?
                .ok_or_else(|| CliError::field("feedback.pll", "required for mode = \"pll\""))?;
            let dt = c.run_time("dt", Dim::Time)?.unwrap_or(PositionRun::default_dt(osc.omega_m()));
            let lockin = match &sim.lockin {
                Some(l) => {
                    let mut s = LockinSettings::new(
                        quantity_si(&l.bandwidth, Dim::Frequency, "simulate.lockin.bandwidth")?,
                        quantity_si(&l.output_rate, Dim::Frequency, "simulate.lockin.output_rate")?,
                    );
                    if let Some(o) = l.order {
                        s.order = o;
                    }
                    s
                }
                None => {
                    // Wide enough for the loop, well inside the carrier.
                    let bw = (20.0 * gains.bandwidth).min(osc.omega_m() / (16.0 * TAU));
                    LockinSettings::new(bw, 4.0 * bw)
                }
            };
            let mut run = PllRun::new(duration, dt, seed, lockin);
            run.thermal = sim.thermal;
            run.settle = 10.0 / osc.gamma_m();
            if let Some(d) = &sim.detuning {
                run.detuning = quantity_si(d, Dim::Frequency, "simulate.detuning")?;
                run.locked_start = false;
            }
            let trace = run_pll(&osc, &bath, &drive, drive.kp(&osc), &gains, &run)?;
            let q = &trace.quadratures;
            if trace.lock_lost {
                eprintln!(
                    "warning: lock lost at t = {} s",
                    trace.lock_lost_at.map(num).unwrap_or_default()
                );
            }
            if sim.format == TraceFormat::Binary {
                let data = TraceData::Quadratures {
                    x1: q.x1.clone(),
                    x2: q.x2.clone(),
                };
                return binary(ctx, q.dt, seed, &data);
            }
            let mut w = ctx.csv()?;
            writeln!(w, "# sample_rate_hz: {}", num(1.0 / q.dt))?;
            writeln!(w, "# lock_lost: {}", trace.lock_lost)?;
            writeln!(w, "t_s,x1_m,x2_m,f_hz")?;
            for (i, ((a, b), f)) in q.x1.iter().zip(&q.x2).zip(&trace.frequency_hz).enumerate() {
                writeln!(w, "{:.9e},{:.9e},{:.9e},{:.12e}", i as f64 * q.dt, a, b, f)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn decimation(output_dt: Option<f64>, dt: f64) -> Result<usize, CliError> {
    let Some(out) = output_dt else { return Ok(1) };
    let k = (out / dt).round();
    if k < 1.0 || ((out / dt) - k).abs() > 1e-6 * k {
        return Err(CliError::field("run.output_dt", "must be a whole multiple of run.dt"));
    }
    Ok(k as usize)
}

fn binary(ctx: &Context, dt: f64, seed: u64, data: &TraceData) -> Result<(), CliError> {
    let path = ctx.out.as_deref().expect("checked above");
    let mut w = BufWriter::new(File::create(path)?);
    write_binary(&mut w, dt, seed, data)?;
    w.flush()?;
    Ok(())
}
