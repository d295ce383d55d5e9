//! Quantities written either as bare SI numbers or as strings with units,
//! e.g. `"30 ng"`, `"1.3 MHz"`, `"12 pF*nm"`, `"0.5 N/m"`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Si(f64),
    Text(String),
}

/// Physical dimension as exponents of the base symbols below.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Mass,
    Frequency,
    Temperature,
    Time,
    Voltage,
    Length,
    Capacitance,
    /// F·m, the geometry constant of C(x) = C₀ + α/(d₀ − x).
    CapacitanceLength,
    Force,
    Stiffness,
    Dimensionless,
}

impl Dim {
    fn exponents(self) -> &'static [(&'static str, i32)] {
        match self {
            Dim::Mass => &[("g", 1)],
            Dim::Frequency => &[("Hz", 1)],
            Dim::Temperature => &[("K", 1)],
            Dim::Time => &[("s", 1)],
            Dim::Voltage => &[("V", 1)],
            Dim::Length => &[("m", 1)],
            Dim::Capacitance => &[("F", 1)],
            Dim::CapacitanceLength => &[("F", 1), ("m", 1)],
            Dim::Force => &[("N", 1)],
            Dim::Stiffness => &[("N", 1), ("m", -1)],
            Dim::Dimensionless => &[],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Dim::Mass => "a mass (g)",
            Dim::Frequency => "a frequency (Hz)",
            Dim::Temperature => "a temperature (K)",
            Dim::Time => "a time (s)",
            Dim::Voltage => "a voltage (V)",
            Dim::Length => "a length (m)",
            Dim::Capacitance => "a capacitance (F)",
            Dim::CapacitanceLength => "a capacitance times length (F*m)",
            Dim::Force => "a force (N)",
            Dim::Stiffness => "a stiffness (N/m)",
            Dim::Dimensionless => "a plain number",
        }
    }
}

const BASES: [&str; 9] = ["Hz", "g", "K", "s", "V", "m", "F", "N", "rad"];

fn prefix(p: &str) -> Option<f64> {
    Some(match p {
        "" => 1.0,
        "T" => 1e12,
        "G" => 1e9,
        "M" => 1e6,
        "k" => 1e3,
        "m" => 1e-3,
        "u" | "µ" | "μ" => 1e-6,
        "n" => 1e-9,
        "p" => 1e-12,
        "f" => 1e-15,
        "a" => 1e-18,
        _ => return None,
    })
}

/// Splits `"pF"` into (1e-12, "F"). The longest matching base wins, so `"m"`
/// is metres and `"ms"` is milliseconds.
fn factor(token: &str) -> Option<(f64, &'static str)> {
    let mut best: Option<(f64, &'static str)> = None;
    for base in BASES {
        if let Some(p) = token.strip_suffix(base) {
            if let Some(scale) = prefix(p) {
                if best.is_none_or(|(_, b)| base.len() > b.len()) {
                    best = Some((scale, base));
                }
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitError(String);

impl fmt::Display for UnitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn parse_text(text: &str, dim: Dim) -> Result<f64, UnitError> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_whitespace())
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .parse()
        .map_err(|_| UnitError(format!("`{text}`: expected a number followed by a unit")))?;
    let unit: String = unit.chars().filter(|c| !c.is_whitespace()).collect();

    let mut scale = 1.0;
    let mut exps: BTreeMap<&str, i32> = BTreeMap::new();
    if !unit.is_empty() {
        let (num_part, den_part) = match unit.split_once('/') {
            Some((n, d)) => (n, Some(d)),
            None => (unit.as_str(), None),
        };
        for (part, sign) in [(Some(num_part), 1), (den_part, -1)] {
            let Some(part) = part else { continue };
            for tok in part.split(['*', '·', '.']).filter(|t| !t.is_empty()) {
                let (s, base) = factor(tok).ok_or_else(|| UnitError(format!("`{text}`: unknown unit `{tok}`")))?;
                scale *= if sign > 0 { s } else { 1.0 / s };
                *exps.entry(base).or_default() += sign;
            }
        }
    }
    // Radians are dimensionless.
    exps.remove("rad");
    exps.retain(|_, e| *e != 0);
    let want: BTreeMap<&str, i32> = dim.exponents().iter().copied().collect();
    if exps != want {
        return Err(UnitError(format!("`{text}`: expected {}", dim.name())));
    }
    // Masses are written in grams but stored in kilograms.
    if dim == Dim::Mass {
        scale *= 1e-3;
    }
    Ok(value * scale)
}

impl Quantity {
    /// Value in SI units (kilograms for masses).
    pub fn si(&self, dim: Dim) -> Result<f64, UnitError> {
        let v = match self {
            Quantity::Si(v) => *v,
            Quantity::Text(t) => parse_text(t, dim)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(UnitError(format!("{v} is not finite")))
        }
    }
}

impl From<f64> for Quantity {
    fn from(v: f64) -> Self {
        Quantity::Si(v)
    }
}
