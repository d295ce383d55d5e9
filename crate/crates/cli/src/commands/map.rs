//! Two-dimensional maps: purity and SNR at optimal feedback over (g_s, γ_qba),
//! and capacitive squeezing over (V_DC, V_p).

use std::io::Write;

use squeezesim_core::analytic::at_optimal_feedback;
use squeezesim_core::capdesign::{squeezing_map, CellFlag};
use squeezesim_core::sweep::map_cells;

use super::Context;
use crate::config::{GridSpec, MapKind};
use crate::error::CliError;
use crate::output::{num, text};

/// Squeezing level (dB10) whose contour is marked on capacitive maps.
const QUANTUM_DB: f64 = 56.0;

/// 1 where `metric − level` changes sign towards the next cell along either
/// axis. NaN cells never mark.
fn contour(metric: &[f64], nx: usize, ny: usize, level: f64) -> Vec<u8> {
    let side = |v: f64| if v.is_nan() { None } else { Some(v >= level) };
    let mut out = vec![0u8; metric.len()];
    for i in 0..nx {
        for j in 0..ny {
            let k = i * ny + j;
            let here = side(metric[k]);
            let mut mark = |other: usize| {
                if let (Some(a), Some(b)) = (here, side(metric[other])) {
                    if a != b {
                        out[k] = 1;
                    }
                }
            };
            if i + 1 < nx {
                mark(k + ny);
            }
            if j + 1 < ny {
                mark(k + 1);
            }
        }
    }
    out
}

fn axis(spec: &Option<String>, path: &str) -> Result<Vec<f64>, CliError> {
    let s = spec
        .as_ref()
        .ok_or_else(|| CliError::field(path, "grid required (min:max:n[,log]) in the config or via --grid"))?;
    Ok(GridSpec::parse(s, path)?.values())
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.loaded.config;
    let m = c.map.as_ref().ok_or_else(|| CliError::Validation("map: section required".into()))?;
    let xs = axis(&m.x, "map.x")?;
    let ys = axis(&m.y, "map.y")?;
    match m.kind {
        MapKind::Squeezing => squeezing(ctx, &xs, &ys),
        kind => quantum(ctx, kind, &xs, &ys),
    }
}

fn quantum(ctx: &Context, kind: MapKind, gs: &[f64], gq: &[f64]) -> Result<(), CliError> {
    let c = &ctx.loaded.config;
    let osc = c.oscillator()?;
    let bath = c.bath()?;
    let readout = c
        .readout(&osc)?
        .ok_or_else(|| CliError::field("readout", "required by purity and snr maps"))?;
    if gs.iter().chain(gq).any(|v| !(*v > 0.0)) {
        return Err(CliError::field("map", "g_s and γ_qba grids must be positive"));
    }
    let nbar = bath.nbar(osc.omega_m());
    let cells: Vec<(f64, f64)> = gs.iter().flat_map(|&g| gq.iter().map(move |&q| (g, q))).collect();
    let points = map_cells(&cells, |&(g, q)| {
        readout
            .with_gamma_qba(q)
            .and_then(|r| at_optimal_feedback(g, nbar, &r))
    });
    let nan = f64::NAN;
    let field = |f: &dyn Fn(&squeezesim_core::analytic::OptimalPoint) -> f64| -> Vec<f64> {
        points.iter().map(|p| p.as_ref().map_or(nan, f)).collect()
    };
    let snr = field(&|p| p.snr.ln());
    let zpf = field(&|p| p.sigma1_zpf.ln());
    let snr_marks = contour(&snr, gs.len(), gq.len(), 0.0);
    let zpf_marks = contour(&zpf, gs.len(), gq.len(), 0.0);

    let mut w = ctx.csv()?;
    writeln!(w, "# map: {kind:?}, eta_det = {}, nbar = {}", num(readout.eta_det()), num(nbar))?;
    writeln!(
        w,
        "gs,gamma_qba,value,flag,gfb_opt,purity,snr,sigma1_sq_zpf,snr_unity_contour,zpf_contour"
    )?;
    for (k, ((g, q), p)) in cells.iter().zip(&points).enumerate() {
        match p {
            Ok(p) => {
                let value = if kind == MapKind::Purity { p.purity } else { p.snr };
                writeln!(
                    w,
                    "{},{},{},ok,{},{},{},{},{},{}",
                    num(*g),
                    num(*q),
                    num(value),
                    num(p.gfb),
                    num(p.purity),
                    num(p.snr),
                    num(p.sigma1_zpf),
                    snr_marks[k],
                    zpf_marks[k]
                )?;
            }
            Err(e) => writeln!(w, "{},{},NaN,{},,,,,0,0", num(*g), num(*q), text(&e.to_string()))?,
        }
    }
    w.flush()?;
    Ok(())
}

fn squeezing(ctx: &Context, vdc: &[f64], vp: &[f64]) -> Result<(), CliError> {
    let c = &ctx.loaded.config;
    let osc = c.oscillator()?;
    let geom = c.capacitor()?;
    if vdc.iter().chain(vp).any(|v| *v < 0.0) {
        return Err(CliError::field("map", "voltages must be >= 0"));
    }
    let cells = squeezing_map(vdc, vp, &osc, &geom)?;
    let db: Vec<f64> = cells
        .iter()
        .map(|c| if c.flag == CellFlag::Ok { c.squeezing_db } else { f64::NAN })
        .collect();
    let marks = contour(&db, vdc.len(), vp.len(), QUANTUM_DB);

    let mut w = ctx.csv()?;
    writeln!(w, "vdc_volts,vp_volts,xeq_m,gs,squeezing_db,flag,contour_56db")?;
    for (cell, mark) in cells.iter().zip(marks) {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            num(cell.vdc),
            num(cell.vp),
            num(cell.x_eq),
            num(cell.gs),
            num(cell.squeezing_db),
            cell.flag.as_str(),
            mark
        )?;
    }
    w.flush()?;
    Ok(())
}
