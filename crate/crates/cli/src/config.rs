//! Experiment configuration: TOML (or JSON) sections mirroring the core types,
//! validated into SI values with dotted field paths in every error.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use squeezesim_core::model::{
    DriveConfig, OscillatorParams, ParametricPhase, PllGains, QuantumReadout, ThermalBath,
};
use squeezesim_core::pipeline::{EstimatorSettings, SweepQuantity};
use squeezesim_core::spectral::Window;
use squeezesim_core::sweep::grid;

use crate::error::CliError;
use crate::units::{Dim, Quantity};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oscillator: Option<OscillatorSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bath: Option<BathSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub readout: Option<ReadoutSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacitor: Option<CapacitorSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allan: Option<AllanSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorSection {
    pub mass: Quantity,
    /// Resonance frequency Ω_m/2π.
    pub frequency: Quantity,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    /// Energy decay linewidth Γ_m/2π, alternative to `q`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linewidth: Option<Quantity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    pub temperature: Quantity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kp: Option<Quantity>,
    #[serde(default = "deamplify")]
    pub phase: ParametricPhase,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f0: Option<Quantity>,
}

fn deamplify() -> ParametricPhase {
    ParametricPhase::Deamplify
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSection {
    #[serde(default)]
    pub gfb: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pll: Option<PllSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PllSection {
    /// Hz/rad; derived from `feedback.gfb` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proportional: Option<f64>,
    /// Hz/(rad·s).
    #[serde(default)]
    pub integral: f64,
    pub bandwidth: Quantity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_qba: Option<f64>,
    pub eta_det: f64,
    /// Optomechanical coupling, rad/s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    /// Cavity decay rate, rad/s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitorSection {
    pub alpha: Quantity,
    pub c0: Quantity,
    pub d0: Quantity,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vdc: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vp: Option<Quantity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// `drive.vp` or `drive.gs`.
    pub variable: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Quantity>>,
    /// `min:max:n[,log]`, alternative to `values`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    /// Threshold voltage used to convert V_p into g_s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vth: Option<Quantity>,
    #[serde(default = "variance")]
    pub quantity: SweepQuantity,
}

fn variance() -> SweepQuantity {
    SweepQuantity::Variance
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<Quantity>,
    /// Spacing of recorded samples; a multiple of `dt`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dt: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_times: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples_per_decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settle_decays: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclude_bins: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span_linewidths: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    #[default]
    Rotating,
    Position,
    Pll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    #[default]
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default)]
    pub mode: SimMode,
    #[serde(default)]
    pub format: TraceFormat,
    #[serde(default = "yes")]
    pub thermal: bool,
    /// Starting frequency offset of the PLL from Ω_m/2π.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detuning: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lockin: Option<LockinSection>,
}

fn yes() -> bool {
    true
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            mode: SimMode::default(),
            format: TraceFormat::default(),
            thermal: yes(),
            detuning: None,
            lockin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockinSection {
    pub bandwidth: Quantity,
    pub output_rate: Quantity,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    #[default]
    X1,
    X2,
    X,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Trace to analyse (CSV or binary). Without it a rotating-frame trace is
    /// simulated from the config.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default)]
    pub channel: Channel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
    /// Half-width of the excluded band around 0 Hz.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclude: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span_linewidths: Option<f64>,
    /// Discarded from the start of the trace.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settle: Option<Quantity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Purity,
    Snr,
    Squeezing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    pub kind: MapKind,
    /// g_s (purity, snr) or V_DC in volts (squeezing).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<String>,
    /// γ_qba (purity, snr) or V_p in volts (squeezing).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllanSection {
    pub input: String,
    /// Nominal frequency; the record mean when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f0: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub taus: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_bins: Option<usize>,
}

/// `min:max:n[,log]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub n: usize,
    pub log: bool,
}

impl GridSpec {
    pub fn parse(text: &str, path: &str) -> Result<Self, CliError> {
        let bad = |why: &str| CliError::field(path, format!("`{text}`: {why} (expected min:max:n[,log])"));
        let (body, log) = match text.trim().split_once(',') {
            Some((b, flag)) if flag.trim() == "log" => (b, true),
            Some((b, flag)) if flag.trim() == "lin" => (b, false),
            Some(_) => return Err(bad("unknown spacing flag")),
            None => (text.trim(), false),
        };
        let parts: Vec<&str> = body.split(':').collect();
        let [lo, hi, n] = parts[..] else {
            return Err(bad("need three fields"));
        };
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
        let (min, max) = (num(lo)?, num(hi)?);
        let n: usize = n.trim().parse().map_err(|_| bad("point count must be an integer"))?;
        if n == 0 || !(min.is_finite() && max.is_finite()) {
            return Err(bad("need at least one finite point"));
        }
        if n > 1 && !(max > min) {
            return Err(bad("max must exceed min"));
        }
        if log && !(min > 0.0) {
            return Err(bad("logarithmic grids need min > 0"));
        }
        Ok(Self { min, max, n, log })
    }

    pub fn values(&self) -> Vec<f64> {
        grid(self.min, self.max, self.n, self.log)
    }
}

/// Loaded configuration plus the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub base: PathBuf,
}

pub fn parse_str(text: &str, json: bool) -> Result<ExperimentConfig, CliError> {
    if json {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    } else {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    let config = parse_str(&text, json)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, base })
}

impl Loaded {
    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

fn si(q: &Quantity, dim: Dim, path: &str) -> Result<f64, CliError> {
    q.si(dim).map_err(|e| CliError::field(path, e.to_string()))
}

fn need<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    section
        .as_ref()
        .ok_or_else(|| CliError::Validation(format!("{name}: section required by this command")))
}

fn core(path: &str, e: squeezesim_core::Error) -> CliError {
    CliError::field(path, e.to_string())
}

impl ExperimentConfig {
    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).unwrap_or_default();
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn oscillator(&self) -> Result<OscillatorParams, CliError> {
        let s = need(&self.oscillator, "oscillator")?;
        let mass = si(&s.mass, Dim::Mass, "oscillator.mass")?;
        let omega = std::f64::consts::TAU * si(&s.frequency, Dim::Frequency, "oscillator.frequency")?;
        match (s.q, &s.linewidth) {
            (Some(q), None) => OscillatorParams::with_q(mass, omega, q).map_err(|e| core("oscillator", e)),
            (None, Some(lw)) => {
                let gamma = std::f64::consts::TAU * si(lw, Dim::Frequency, "oscillator.linewidth")?;
                OscillatorParams::new(mass, omega, gamma).map_err(|e| core("oscillator", e))
            }
            _ => Err(CliError::field("oscillator", "give exactly one of `q` and `linewidth`")),
        }
    }

    pub fn bath(&self) -> Result<ThermalBath, CliError> {
        let s = need(&self.bath, "bath")?;
        ThermalBath::new(si(&s.temperature, Dim::Temperature, "bath.temperature")?).map_err(|e| core("bath", e))
    }

    /// Drive with g_s from `gs` or `kp` (checked for consistency when both given).
    pub fn drive(&self, osc: &OscillatorParams) -> Result<DriveConfig, CliError> {
        let s = need(&self.drive, "drive")?;
        let f0 = match &s.f0 {
            Some(q) => si(q, Dim::Force, "drive.f0")?,
            None => 0.0,
        };
        let kp = s.kp.as_ref().map(|q| si(q, Dim::Stiffness, "drive.kp")).transpose()?;
        let mut drive = match (s.gs, kp) {
            (Some(gs), _) => DriveConfig::new(f0, s.phase, gs).map_err(|e| core("drive", e))?,
            (None, Some(kp)) => DriveConfig::from_kp(f0, s.phase, kp, osc).map_err(|e| core("drive", e))?,
            (None, None) => DriveConfig::new(f0, s.phase, 0.0).map_err(|e| core("drive", e))?,
        };
        if let (Some(_), Some(kp)) = (s.gs, kp) {
            drive.kp = Some(kp);
        }
        drive.validate(osc).map_err(|e| core("drive", e))?;
        Ok(drive)
    }

    pub fn gfb(&self) -> Result<f64, CliError> {
        let gfb = self.feedback.as_ref().map_or(0.0, |f| f.gfb);
        if !(gfb >= 0.0 && gfb.is_finite()) {
            return Err(CliError::field("feedback.gfb", "must be finite and >= 0"));
        }
        Ok(gfb)
    }

    pub fn pll(&self, osc: &OscillatorParams) -> Result<Option<PllGains>, CliError> {
        let Some(p) = self.feedback.as_ref().and_then(|f| f.pll.as_ref()) else {
            return Ok(None);
        };
        let proportional = match p.proportional {
            Some(v) => v,
            None => squeezesim_core::simulate::proportional_gain_for(self.gfb()?, osc),
        };
        Ok(Some(PllGains {
            proportional,
            integral: p.integral,
            bandwidth: si(&p.bandwidth, Dim::Frequency, "feedback.pll.bandwidth")?,
        }))
    }

    pub fn readout(&self, osc: &OscillatorParams) -> Result<Option<QuantumReadout>, CliError> {
        let Some(r) = &self.readout else { return Ok(None) };
        let built = match (r.gamma_qba, r.g, r.kappa) {
            (Some(gq), None, None) => QuantumReadout::new(gq, r.eta_det),
            (None, Some(g), Some(kappa)) => QuantumReadout::from_cavity(g, kappa, r.eta_det, osc),
            _ => return Err(CliError::field("readout", "give either `gamma_qba` or both `g` and `kappa`")),
        };
        built.map(Some).map_err(|e| core("readout", e))
    }

    pub fn capacitor(&self) -> Result<squeezesim_core::capdesign::CapacitorGeometry, CliError> {
        let c = need(&self.capacitor, "capacitor")?;
        let v = |q: &Option<Quantity>, p: &str| q.as_ref().map_or(Ok(0.0), |q| si(q, Dim::Voltage, p));
        squeezesim_core::capdesign::CapacitorGeometry::new(
            si(&c.alpha, Dim::CapacitanceLength, "capacitor.alpha")?,
            si(&c.c0, Dim::Capacitance, "capacitor.c0")?,
            si(&c.d0, Dim::Length, "capacitor.d0")?,
            v(&c.vdc, "capacitor.vdc")?,
            v(&c.vp, "capacitor.vp")?,
        )
        .map_err(|e| core("capacitor", e))
    }

    pub fn estimator(&self) -> Result<EstimatorSettings, CliError> {
        let mut e = EstimatorSettings::default();
        if let Some(s) = &self.estimator {
            let pos = |v: Option<f64>, slot: &mut f64, p: &str| -> Result<(), CliError> {
                if let Some(v) = v {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(CliError::field(p, "must be positive"));
                    }
                    *slot = v;
                }
                Ok(())
            };
            pos(s.decay_times, &mut e.decay_times, "estimator.decay_times")?;
            pos(s.samples_per_decay, &mut e.samples_per_decay, "estimator.samples_per_decay")?;
            pos(s.settle_decays, &mut e.settle_decays, "estimator.settle_decays")?;
            pos(s.exclude_bins, &mut e.exclude_bins, "estimator.exclude_bins")?;
            pos(s.span_linewidths, &mut e.span_linewidths, "estimator.span_linewidths")?;
            if let Some(n) = s.segment_len {
                if n < 16 {
                    return Err(CliError::field("estimator.segment_len", "must be at least 16"));
                }
                e.segment_len = n;
            }
            if let Some(o) = s.overlap {
                if !(0.0..1.0).contains(&o) {
                    return Err(CliError::field("estimator.overlap", "must lie in [0, 1)"));
                }
                e.overlap = o;
            }
        }
        Ok(e)
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.run.as_ref().and_then(|r| r.seeds.clone()).unwrap_or_else(|| vec![0])
    }

    pub fn run_time(&self, field: &str, dim: Dim) -> Result<Option<f64>, CliError> {
        let Some(r) = &self.run else { return Ok(None) };
        let q = match field {
            "duration" => &r.duration,
            "dt" => &r.dt,
            _ => &r.output_dt,
        };
        let path = format!("run.{field}");
        match q {
            Some(q) => {
                let v = si(q, dim, &path)?;
                if !(v > 0.0) {
                    return Err(CliError::field(&path, "must be positive"));
                }
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }

    /// Sweep values in the variable's own unit (volts or plain g_s).
    pub fn sweep_values(&self) -> Result<Vec<f64>, CliError> {
        let s = need(&self.sweep, "sweep")?;
        let dim = match s.variable.as_str() {
            "drive.vp" => Dim::Voltage,
            "drive.gs" => Dim::Dimensionless,
            other => {
                return Err(CliError::field(
                    "sweep.variable",
                    format!("`{other}`: expected `drive.vp` or `drive.gs`"),
                ))
            }
        };
        let values = match (&s.values, &s.grid) {
            (Some(v), None) => v
                .iter()
                .enumerate()
                .map(|(i, q)| si(q, dim, &format!("sweep.values[{i}]")))
                .collect::<Result<Vec<_>, _>>()?,
            (None, Some(g)) => GridSpec::parse(g, "sweep.grid")?.values(),
            _ => return Err(CliError::field("sweep", "give exactly one of `values` and `grid`")),
        };
        if values.is_empty() {
            return Err(CliError::field("sweep.values", "must not be empty"));
        }
        if values.iter().any(|v| *v < 0.0) {
            return Err(CliError::field("sweep.values", "must be >= 0"));
        }
        Ok(values)
    }

    pub fn window(&self) -> Window {
        self.fit.as_ref().and_then(|f| f.window).unwrap_or(Window::Hann)
    }
}

pub fn quantity_si(q: &Quantity, dim: Dim, path: &str) -> Result<f64, CliError> {
    si(q, dim, path)
}
