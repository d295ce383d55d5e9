use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rotating-frame quadrature record, sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureTrace {
    pub dt: f64,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub seed: u64,
    /// Free-form snapshot of the inputs that produced the trace.
    pub params: String,
    /// Set when the run was unstable; the trace ends at the last finite sample.
    pub divergent: bool,
}

/// Lab-frame position record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionTrace {
    pub dt: f64,
    pub x: Vec<f64>,
    /// Electronic-oscillator phase at each sample, wrapped to [0, 2π).
    pub drive_phase: Vec<f64>,
    pub seed: u64,
}

/// Mean and variance of a stationary series with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleStats {
    pub mean: f64,
    pub variance: f64,
    pub variance_std_err: f64,
    pub n: usize,
}

impl SampleStats {
    /// `batches` non-overlapping blocks; each must be much longer than the
    /// correlation time for the standard error to be meaningful.
    pub fn of(samples: &[f64], batches: usize) -> Result<Self> {
        let batches = batches.max(2);
        if samples.len() < 2 * batches {
            return Err(Error::TooShort {
                needed: 2 * batches,
                got: samples.len(),
            });
        }
        let (mean, variance) = mean_var(samples);
        let len = samples.len() / batches;
        let batch_vars: Vec<f64> = samples
            .chunks_exact(len)
            .take(batches)
            .map(|c| {
                let s: f64 = c.iter().map(|v| (v - mean) * (v - mean)).sum();
                s / c.len() as f64
            })
            .collect();
        let (_, spread) = mean_var(&batch_vars);
        Ok(Self {
            mean,
            variance,
            variance_std_err: (spread * batches as f64 / (batches - 1) as f64 / batches as f64).sqrt(),
            n: samples.len(),
        })
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

impl QuadratureTrace {
    pub fn len(&self) -> usize {
        self.x1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x1.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.len() as f64
    }

    /// Index of the first sample after `settle` seconds.
    pub fn settle_index(&self, settle: f64) -> usize {
        ((settle / self.dt).ceil() as usize).min(self.len())
    }

    pub fn stats(&self, settle: f64, batches: usize) -> Result<(SampleStats, SampleStats)> {
        let i = self.settle_index(settle);
        Ok((SampleStats::of(&self.x1[i..], batches)?, SampleStats::of(&self.x2[i..], batches)?))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t_s,x1_m,x2_m")?;
        for (i, (a, b)) in self.x1.iter().zip(&self.x2).enumerate() {
            writeln!(out, "{:.9e},{:.9e},{:.9e}", i as f64 * self.dt, a, b)?;
        }
        Ok(())
    }
}

impl PositionTrace {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t_s,x_m")?;
        for (i, x) in self.x.iter().enumerate() {
            writeln!(out, "{:.9e},{:.9e}", i as f64 * self.dt, x)?;
        }
        Ok(())
    }
}

const MAGIC: &[u8; 4] = b"SQZT";
const VERSION: u16 = 1;

/// Channels of a binary trace file.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceData {
    Quadratures { x1: Vec<f64>, x2: Vec<f64> },
    Position { x: Vec<f64> },
}

/// Little-endian binary export: magic, version, channel count, dt, length,
/// seed, then samples interleaved by channel.
pub fn write_binary<W: Write>(mut out: W, dt: f64, seed: u64, data: &TraceData) -> io::Result<()> {
    let channels: Vec<&[f64]> = match data {
        TraceData::Quadratures { x1, x2 } => vec![x1, x2],
        TraceData::Position { x } => vec![x],
    };
    let len = channels[0].len();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(channels.len() as u16).to_le_bytes())?;
    out.write_all(&dt.to_le_bytes())?;
    out.write_all(&(len as u64).to_le_bytes())?;
    out.write_all(&seed.to_le_bytes())?;
    for i in 0..len {
        for c in &channels {
            out.write_all(&c[i].to_le_bytes())?;
        }
    }
    Ok(())
}

/// Returns (dt, seed, data).
pub fn read_binary<R: Read>(mut input: R) -> io::Result<(f64, u64, TraceData)> {
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a trace file"));
    }
    let mut b2 = [0u8; 2];
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b2)?;
    if u16::from_le_bytes(b2) != VERSION {
        return Err(bad("unsupported trace version"));
    }
    input.read_exact(&mut b2)?;
    let channels = u16::from_le_bytes(b2) as usize;
    input.read_exact(&mut b8)?;
    let dt = f64::from_le_bytes(b8);
    input.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8) as usize;
    input.read_exact(&mut b8)?;
    let seed = u64::from_le_bytes(b8);
    let mut data = vec![Vec::with_capacity(len); channels];
    for _ in 0..len {
        for c in data.iter_mut() {
            input.read_exact(&mut b8)?;
            c.push(f64::from_le_bytes(b8));
        }
    }
    let data = match channels {
        1 => TraceData::Position { x: data.remove(0) },
        2 => {
            let x2 = data.pop().unwrap_or_default();
            let x1 = data.pop().unwrap_or_default();
            TraceData::Quadratures { x1, x2 }
        }
        _ => return Err(bad("unexpected channel count")),
    };
    Ok((dt, seed, data))
}
