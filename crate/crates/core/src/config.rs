//! Parameter files and quantities with units.
//!
//! Dimensioned values are written as strings such as `"117 MHz"`,
//! `"27.97 GHz/T"`, `"15 nm"` or `"1e4 V/m"`. Cyclic frequencies are
//! converted to angular frequencies on ingestion. Dimensionless values are
//! plain numbers.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SystemParams;
use crate::TWO_PI;

/// Physical dimension of a configurable quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    /// Stored in rad/s.
    AngularFrequency,
    /// Stored in rad/s/T.
    GyromagneticRatio,
    Length,
    MagneticField,
    ElectricField,
    Time,
    /// Stored in rad.
    Angle,
    Dimensionless,
}

impl Dimension {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dimension::AngularFrequency => &[
                ("rad/s", 1.0),
                ("Hz", TWO_PI),
                ("kHz", TWO_PI * 1e3),
                ("MHz", TWO_PI * 1e6),
                ("GHz", TWO_PI * 1e9),
            ],
            Dimension::GyromagneticRatio => &[
                ("rad/s/T", 1.0),
                ("Hz/T", TWO_PI),
                ("kHz/T", TWO_PI * 1e3),
                ("MHz/T", TWO_PI * 1e6),
                ("GHz/T", TWO_PI * 1e9),
            ],
            Dimension::Length => &[("m", 1.0), ("um", 1e-6), ("µm", 1e-6), ("nm", 1e-9)],
            Dimension::MagneticField => &[("T", 1.0), ("mT", 1e-3), ("uT", 1e-6), ("µT", 1e-6)],
            Dimension::ElectricField => &[("V/m", 1.0), ("kV/m", 1e3)],
            Dimension::Time => &[
                ("s", 1.0),
                ("ms", 1e-3),
                ("us", 1e-6),
                ("µs", 1e-6),
                ("ns", 1e-9),
                ("ps", 1e-12),
            ],
            Dimension::Angle => &[
                ("rad", 1.0),
                ("deg", std::f64::consts::PI / 180.0),
                ("pi", std::f64::consts::PI),
            ],
            Dimension::Dimensionless => &[],
        }
    }

    fn example(self) -> &'static str {
        match self {
            Dimension::AngularFrequency => "\"117 MHz\"",
            Dimension::GyromagneticRatio => "\"27.97 GHz/T\"",
            Dimension::Length => "\"15 nm\"",
            Dimension::MagneticField => "\"0.2 T\"",
            Dimension::ElectricField => "\"1e4 V/m\"",
            Dimension::Time => "\"25 ns\"",
            Dimension::Angle => "\"0.25 pi\"",
            Dimension::Dimensionless => "-0.002",
        }
    }
}

/// A number, or a string holding a number and a unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Number(f64),
    Text(String),
}

impl Quantity {
    /// Value in internal units. `field` names the offending entry in errors.
    pub fn resolve(&self, field: &str, dim: Dimension) -> Result<f64> {
        let value = match (self, dim) {
            (Quantity::Number(x), Dimension::Dimensionless) => *x,
            (Quantity::Number(_), _) => {
                return Err(Error::Unit {
                    field: field.into(),
                    reason: format!("needs an explicit unit, e.g. {}", dim.example()),
                })
            }
            (Quantity::Text(s), Dimension::Dimensionless) => s.trim().parse::<f64>().map_err(|_| Error::Unit {
                field: field.into(),
                reason: format!("`{s}` is not a plain number"),
            })?,
            (Quantity::Text(s), _) => parse_with_unit(field, s, dim)?,
        };
        if !value.is_finite() {
            return Err(Error::param(field, "must be finite"));
        }
        Ok(value)
    }
}

fn parse_with_unit(field: &str, text: &str, dim: Dimension) -> Result<f64> {
    let text = text.trim();
    let split = text
        .char_indices()
        .find(|&(i, c)| c.is_whitespace() || (c.is_alphabetic() && !is_exponent(text, i)) || c == 'µ')
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(split);
    let unit = unit.trim();
    let number: f64 = num.trim().parse().map_err(|_| Error::Unit {
        field: field.into(),
        reason: format!("cannot read a number from `{text}`"),
    })?;
    let (_, scale) = dim
        .units()
        .iter()
        .find(|(u, _)| *u == unit)
        .ok_or_else(|| Error::Unit {
            field: field.into(),
            reason: format!(
                "unknown unit `{unit}`; expected one of {}",
                dim.units().iter().map(|(u, _)| *u).collect::<Vec<_>>().join(", ")
            ),
        })?;
    Ok(number * scale)
}

/// `e`/`E` inside a number such as `1e4`.
fn is_exponent(text: &str, i: usize) -> bool {
    let bytes = text.as_bytes();
    if !(bytes[i] == b'e' || bytes[i] == b'E') || i == 0 {
        return false;
    }
    let before = bytes[i - 1].is_ascii_digit() || bytes[i - 1] == b'.';
    let after = bytes
        .get(i + 1)
        .map(|b| b.is_ascii_digit() || *b == b'-' || *b == b'+')
        .unwrap_or(false);
    before && after
}

/// Keys of a parameter table with their dimensions.
pub const PARAM_KEYS: [(&str, Dimension); 8] = [
    ("hyperfine_a", Dimension::AngularFrequency),
    ("gamma_e", Dimension::GyromagneticRatio),
    ("gamma_n", Dimension::GyromagneticRatio),
    ("delta_gamma", Dimension::Dimensionless),
    ("donor_depth", Dimension::Length),
    ("b0", Dimension::MagneticField),
    ("vt", Dimension::AngularFrequency),
    ("de_idle", Dimension::ElectricField),
];

/// Applies the entries of `table` on top of the defaults. When `vt` is
/// absent it follows B0(γe + γn) with the overridden values.
pub fn params_from_table(table: &toml::Table) -> Result<SystemParams> {
    let mut p = SystemParams::default();
    let mut vt = None;
    for (key, value) in table {
        let dim = PARAM_KEYS
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, d)| *d)
            .ok_or_else(|| Error::param(key, "not a device parameter"))?;
        let q: Quantity = value.clone().try_into().map_err(|_| Error::Unit {
            field: key.clone(),
            reason: "expected a number or a quoted quantity".into(),
        })?;
        let x = q.resolve(key, dim)?;
        match key.as_str() {
            "hyperfine_a" => p.hyperfine_a = x,
            "gamma_e" => p.gamma_e = x,
            "gamma_n" => p.gamma_n = x,
            "delta_gamma" => p.delta_gamma = x,
            "donor_depth" => p.donor_depth = x,
            "b0" => p.b0 = x,
            "vt" => vt = Some(x),
            "de_idle" => p.de_idle = x,
            _ => unreachable!(),
        }
    }
    p.vt = vt.unwrap_or(p.b0 * (p.gamma_e + p.gamma_n));
    p.validate()?;
    Ok(p)
}

/// Human-readable `(key, value)` pairs for output headers, in file units.
pub fn params_provenance(p: &SystemParams) -> Vec<(String, String)> {
    let f = |x: f64| x / TWO_PI;
    vec![
        ("hyperfine_a".into(), format!("{} MHz", f(p.hyperfine_a) / 1e6)),
        ("gamma_e".into(), format!("{} GHz/T", f(p.gamma_e) / 1e9)),
        ("gamma_n".into(), format!("{} MHz/T", f(p.gamma_n) / 1e6)),
        ("delta_gamma".into(), format!("{}", p.delta_gamma)),
        ("donor_depth".into(), format!("{} nm", p.donor_depth * 1e9)),
        ("b0".into(), format!("{} T", p.b0)),
        ("vt".into(), format!("{} GHz", f(p.vt) / 1e9)),
        ("de_idle".into(), format!("{} V/m", p.de_idle)),
    ]
}

/// A standalone parameter file: a TOML document whose top-level keys are
/// [`PARAM_KEYS`], or one with a `[params]` table.
pub fn load_params(path: &Path) -> Result<SystemParams> {
    params_from_str(&std::fs::read_to_string(path)?)
}

/// Same as [`load_params`] for text already in memory.
pub fn params_from_str(text: &str) -> Result<SystemParams> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    match table.get("params") {
        Some(toml::Value::Table(t)) => params_from_table(t),
        Some(_) => Err(Error::param("params", "must be a table")),
        None => params_from_table(&table),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mhz;

    fn q(s: &str) -> Quantity {
        Quantity::Text(s.into())
    }

    #[test]
    fn units_convert() {
        let f = |s: &str, d| q(s).resolve("x", d).unwrap();
        assert!((f("117 MHz", Dimension::AngularFrequency) - mhz(117.0)).abs() < 1e-6);
        assert!((f("1e4 V/m", Dimension::ElectricField) - 1e4).abs() < 1e-9);
        assert!((f("1e4V/m", Dimension::ElectricField) - 1e4).abs() < 1e-9);
        assert!((f("15 nm", Dimension::Length) - 15e-9).abs() < 1e-20);
        assert!((f("0.25 pi", Dimension::Angle) - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((f("2.5e-2 us", Dimension::Time) - 25e-9).abs() < 1e-20);
    }

    #[test]
    fn missing_or_wrong_units_name_the_field() {
        let e = Quantity::Number(117.0)
            .resolve("hyperfine_a", Dimension::AngularFrequency)
            .unwrap_err();
        assert!(e.to_string().contains("hyperfine_a"));
        let e = q("117 furlongs")
            .resolve("hyperfine_a", Dimension::AngularFrequency)
            .unwrap_err();
        assert!(e.to_string().contains("furlongs"));
    }

    #[test]
    fn table_overrides_and_vt_follows_b0() {
        let t: toml::Table = "b0 = \"0.3 T\"\ndelta_gamma = -0.001".parse().unwrap();
        let p = params_from_table(&t).unwrap();
        assert_eq!(p.b0, 0.3);
        assert_eq!(p.delta_gamma, -0.001);
        assert!((p.vt - 0.3 * (p.gamma_e + p.gamma_n)).abs() < 1e-3);
        let bad: toml::Table = "bogus = 1".parse().unwrap();
        assert!(params_from_table(&bad).unwrap_err().to_string().contains("bogus"));
    }

    #[test]
    fn provenance_round_trips() {
        let p = SystemParams::default();
        let mut t = toml::Table::new();
        for (k, v) in params_provenance(&p) {
            let value = if k == "delta_gamma" {
                toml::Value::Float(v.parse().unwrap())
            } else {
                toml::Value::String(v)
            };
            t.insert(k, value);
        }
        let back = params_from_table(&t).unwrap();
        for (a, b) in [
            (back.hyperfine_a, p.hyperfine_a),
            (back.gamma_e, p.gamma_e),
            (back.vt, p.vt),
            (back.donor_depth, p.donor_depth),
        ] {
            assert!(((a - b) / b).abs() < 1e-12);
        }
    }
}
