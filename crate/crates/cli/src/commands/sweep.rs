//! Seeded Monte-Carlo sweep through the full estimation pipeline.

use std::io::Write;

use squeezesim_core::analytic::{db10, db20};
use squeezesim_core::model::classical_sigma0_sq;
use squeezesim_core::pipeline::{run_sweep, SweepPlan, SweepQuantity, SweepVariable};

use super::Context;
use crate::config::quantity_si;
use crate::error::CliError;
use crate::output::{num, opt, text};
use crate::units::Dim;

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.loaded.config;
    let osc = c.oscillator()?;
    let bath = c.bath()?;
    let s = c.sweep.as_ref().ok_or_else(|| CliError::Validation("sweep: section required".into()))?;
    let values = c.sweep_values()?;
    let variable = match s.variable.as_str() {
        "drive.vp" => {
            let vth = s
                .vth
                .as_ref()
                .ok_or_else(|| CliError::field("sweep.vth", "required when sweeping drive.vp"))?;
            SweepVariable::Vp {
                vth: quantity_si(vth, Dim::Voltage, "sweep.vth")?,
            }
        }
        _ => SweepVariable::Gs,
    };
    let f0 = match s.quantity {
        SweepQuantity::Variance => 0.0,
        _ => c.drive(&osc)?.f0,
    };
    let plan = SweepPlan {
        variable,
        values,
        quantity: s.quantity,
        gfb: c.gfb()?,
        f0,
        estimator: c.estimator()?,
    };
    let seeds = ctx.seeds();
    let report = run_sweep(&osc, &bath, &plan, &seeds)?;

    let (value_col, mean_col, rel_col) = match (variable, s.quantity) {
        (SweepVariable::Vp { .. }, SweepQuantity::Variance) => ("vp_volts", "sigma1_sq_m2", "sigma1_sq_ratio_db10"),
        (SweepVariable::Gs, SweepQuantity::Variance) => ("gs", "sigma1_sq_m2", "sigma1_sq_ratio_db10"),
        (SweepVariable::Vp { .. }, _) => ("vp_volts", "x1_mean_m", "x1_gain_db20"),
        (SweepVariable::Gs, _) => ("gs", "x1_mean_m", "x1_gain_db20"),
    };
    // Reference: thermal variance, or the undriven-pump response F₀/(mΩΓ).
    let reference = match s.quantity {
        SweepQuantity::Variance => classical_sigma0_sq(&osc, &bath),
        _ => f0 / (osc.mass() * osc.omega_m() * osc.gamma_m()),
    };
    let rel = |v: f64| match s.quantity {
        SweepQuantity::Variance => db10(v / reference),
        _ => db20(v / reference),
    };

    let mut w = ctx.csv()?;
    writeln!(
        w,
        "{value_col},gs,n_ok,n_failed,{mean_col},std_err,{rel_col},predicted,gamma_hz,gamma_hz_std_err,flags"
    )?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            num(r.value),
            num(r.gs),
            r.n_ok,
            r.n_failed,
            num(r.mean),
            num(r.std_err),
            num(rel(r.mean)),
            num(r.predicted),
            opt(r.gamma_hz_mean),
            opt(r.gamma_hz_std_err),
            text(&r.flags.join("; "))
        )?;
    }
    // Summary row: threshold fit in the value column's unit.
    match (&report.threshold, &report.threshold_error) {
        (Some(t), _) => writeln!(
            w,
            "vth_fit,,,,{},{},,,,,{}",
            num(t.vth),
            num(t.uncertainty),
            text(&format!("model={:?} scale={} rms_residual={}", t.model, num(t.scale), num(t.rms_residual)))
        )?,
        (None, Some(e)) => writeln!(w, "vth_fit,,,,,,,,,,{}", text(e))?,
        (None, None) => {}
    }
    w.flush()?;
    Ok(())
}
