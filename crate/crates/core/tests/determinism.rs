use std::f64::consts::TAU;

use squeezesim_core::capdesign::{squeezing_map, CapacitorGeometry};
use squeezesim_core::model::{OscillatorParams, ThermalBath};
use squeezesim_core::pipeline::{run_sweep, EstimatorSettings, SweepPlan, SweepQuantity, SweepVariable};
use squeezesim_core::simulate::{read_binary, simulate_rotating, write_binary, RotatingRun, TraceData};
use squeezesim_core::sweep::{grid, map_cells, map_cells_sequential};

fn osc() -> OscillatorParams {
    OscillatorParams::with_q(1e-12, TAU * 1e4, 1e4).unwrap()
}

fn short_plan() -> SweepPlan {
    SweepPlan {
        variable: SweepVariable::Vp { vth: 0.148 },
        values: grid(0.0, 0.6, 5, false),
        quantity: SweepQuantity::Variance,
        gfb: 6.0,
        f0: 0.0,
        estimator: EstimatorSettings {
            decay_times: 500.0,
            segment_len: 1024,
            ..EstimatorSettings::default()
        },
    }
}

#[test]
fn sweep_is_bitwise_reproducible() {
    let bath = ThermalBath::new(300.0).unwrap();
    let a = run_sweep(&osc(), &bath, &short_plan(), &[3, 4, 5]).unwrap();
    let b = run_sweep(&osc(), &bath, &short_plan(), &[3, 4, 5]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn pool_order_does_not_change_results() {
    let cells: Vec<u64> = (0..32).collect();
    let f = |&s: &u64| {
        let run = RotatingRun::new(1.0, 1e-4, s);
        let t = simulate_rotating(&osc(), &ThermalBath::new(4.0).unwrap(), 0.5, 1.0, None, &run).unwrap();
        t.x1.iter().map(|v| v * v).sum::<f64>()
    };
    assert_eq!(map_cells(&cells, f), map_cells_sequential(&cells, f));
}

#[test]
fn squeezing_map_is_row_major_and_deterministic() {
    let o = OscillatorParams::with_q(30e-12, TAU * 1e6, 1e9).unwrap();
    let g = CapacitorGeometry::new(12e-21, 16e-15, 1e-6, 0.0, 0.0).unwrap();
    let vdc = grid(0.5, 5.0, 4, false);
    let vp = grid(0.01, 1.0, 3, true);
    let m = squeezing_map(&vdc, &vp, &o, &g).unwrap();
    assert_eq!(m.len(), 12);
    for (k, c) in m.iter().enumerate() {
        assert_eq!(c.vdc, vdc[k / 3]);
        assert_eq!(c.vp, vp[k % 3]);
    }
    assert_eq!(m, squeezing_map(&vdc, &vp, &o, &g).unwrap());
}

#[test]
fn simulated_trace_survives_binary_round_trip() {
    let run = RotatingRun::new(0.5, 1e-4, 9);
    let t = simulate_rotating(&osc(), &ThermalBath::new(300.0).unwrap(), 2.0, 3.0, None, &run).unwrap();
    let mut buf = Vec::new();
    let data = TraceData::Quadratures {
        x1: t.x1.clone(),
        x2: t.x2.clone(),
    };
    write_binary(&mut buf, t.dt, t.seed, &data).unwrap();
    let (dt, seed, back) = read_binary(&mut buf.as_slice()).unwrap();
    assert_eq!((dt, seed), (t.dt, 9));
    assert_eq!(back, data);
}
