//! Closed-form steady state at the configured operating point.

use std::io::Write;

use squeezesim_core::analytic::{
    at_optimal_feedback, db10, db20, detection_snr, purity, quantum_variances, required_squeezing_db,
    stability_margin, steady_state_amplitude,
};
use squeezesim_core::model::{classical_sigma0_sq, ParametricPhase};

use super::Context;
use crate::error::CliError;
use crate::output::num;

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.loaded.config;
    let osc = c.oscillator()?;
    let bath = c.bath()?;
    let drive = c.drive(&osc)?;
    let gfb = c.gfb()?;
    let readout = c.readout(&osc)?;
    let gs = drive.gs;

    let mut rows: Vec<(&str, String)> = Vec::new();
    let margin = stability_margin(gs, gfb);
    let stable = margin > 0.0;
    let sigma0_sq = classical_sigma0_sq(&osc, &bath);
    let nbar = bath.nbar(osc.omega_m());
    let xz = osc.x_zpf();
    rows.push(("gs", num(gs)));
    rows.push(("gfb", num(gfb)));
    rows.push(("stability_margin", num(margin)));
    rows.push(("stable", stable.to_string()));
    rows.push(("low_q_warning", osc.low_q_warning().to_string()));
    rows.push(("nbar", num(nbar)));
    rows.push(("x_zpf_m", num(xz)));
    rows.push(("sigma0_sq_m2", num(sigma0_sq)));

    // σ₁² does not depend on feedback; σ₂² diverges past the margin.
    let s1 = sigma0_sq / (1.0 + gs);
    let s2 = if stable { sigma0_sq / margin } else { f64::INFINITY };
    rows.push(("sigma1_sq_m2", num(s1)));
    rows.push(("sigma2_sq_m2", num(s2)));
    rows.push(("sigma1_sq_ratio_db10", num(db10(s1 / sigma0_sq))));
    rows.push(("sigma2_sq_ratio_db10", num(db10(s2 / sigma0_sq))));

    let gain = match drive.phase {
        ParametricPhase::Deamplify => 1.0 / (1.0 + gs),
        ParametricPhase::Amplify if gs < 1.0 => 1.0 / (1.0 - gs),
        ParametricPhase::Amplify => f64::INFINITY,
    };
    rows.push(("x1_gain_db10", num(db10(gain))));
    rows.push(("x1_gain_db20", num(db20(gain))));
    if drive.f0 != 0.0 && drive.phase == ParametricPhase::Deamplify {
        rows.push(("x1_mean_m", num(steady_state_amplitude(drive.f0, &osc, gs))));
    }

    let gq = readout.map_or(0.0, |r| r.gamma_qba());
    rows.push(("required_squeezing_db10", num(required_squeezing_db(nbar, gq))));

    if let Some(r) = readout {
        if stable {
            let q = quantum_variances(gs, gfb, nbar, &r, xz)?;
            rows.push(("quantum_sigma1_sq_m2", num(q.sigma1_sq)));
            rows.push(("quantum_sigma2_sq_m2", num(q.sigma2_sq)));
            rows.push(("purity", num(purity(&q, xz))));
        }
        rows.push(("snr", num(detection_snr(gs, nbar, &r))));
        if r.g_meas() > 0.0 {
            let opt = at_optimal_feedback(gs, nbar, &r)?;
            rows.push(("optimal_gfb", num(opt.gfb)));
            rows.push(("optimal_purity", num(opt.purity)));
            rows.push(("optimal_sigma1_sq_zpf", num(opt.sigma1_zpf)));
            rows.push(("optimal_sigma2_sq_zpf", num(opt.variances.sigma2_sq)));
        }
    }

    let mut w = ctx.csv()?;
    writeln!(w, "quantity,value")?;
    for (k, v) in rows {
        writeln!(w, "{k},{v}")?;
    }
    w.flush()?;
    Ok(())
}
