//! Quantities with mandatory unit suffixes, e.g. `"125 kHz"` or `"120 us"`.

use std::f64::consts::PI;
use std::fmt;

/// Physical dimension of a configured value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    /// Cyclic frequency, converted to angular frequency (rad/s).
    Frequency,
    /// Linewidth or rate in Hz, kept cyclic.
    Rate,
    /// Time, converted to seconds.
    Time,
    /// Angle, converted to radians.
    Angle,
}

impl Dimension {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dimension::Frequency => &[("Hz", 2.0 * PI), ("kHz", 2.0 * PI * 1e3), ("MHz", 2.0 * PI * 1e6)],
            Dimension::Rate => &[("Hz", 1.0), ("kHz", 1e3), ("MHz", 1e6)],
            Dimension::Time => &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6), ("ns", 1e-9)],
            Dimension::Angle => &[("rad", 1.0), ("deg", PI / 180.0), ("pi", PI)],
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.units().iter().map(|(u, _)| *u).collect();
        let kind = match self {
            Dimension::Frequency => "frequency",
            Dimension::Rate => "rate",
            Dimension::Time => "time",
            Dimension::Angle => "angle",
        };
        write!(f, "{kind} ({})", names.join(", "))
    }
}

/// Splits `"<number> <unit>"` into the number as written and its unit.
pub fn split_quantity(text: &str) -> Result<(f64, &str), String> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .or_else(|| text.rfind(char::is_whitespace).map(|i| i + 1));
    let (num, unit) = match split {
        Some(i) => (text[..i].trim(), text[i..].trim()),
        None => (text, ""),
    };
    if unit.is_empty() {
        return Err(format!("missing unit in {text:?}"));
    }
    let value: f64 = num.parse().map_err(|_| format!("invalid number {num:?} in {text:?}"))?;
    if !value.is_finite() {
        return Err(format!("non-finite value in {text:?}"));
    }
    Ok((value, unit))
}

/// Parses `"<number> <unit>"` into SI (rad/s, Hz, s, rad).
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let (value, unit) = split_quantity(text).map_err(|e| format!("{e}; expected a {dim}"))?;
    let scale = dim
        .units()
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|(_, s)| *s)
        .ok_or_else(|| format!("unknown unit {unit:?} in {:?}; expected a {dim}", text.trim()))?;
    Ok(value * scale)
}

/// Inverse of [`parse_quantity`] in the given unit.
pub fn format_quantity(value: f64, dim: Dimension, unit: &str) -> String {
    let scale = dim.units().iter().find(|(u, _)| *u == unit).map(|(_, s)| *s).unwrap_or(1.0);
    format!("{} {unit}", value / scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequencies_become_angular() {
        let w = parse_quantity("125 kHz", Dimension::Frequency).unwrap();
        assert!((w - 2.0 * PI * 125e3).abs() < 1e-6);
        assert_eq!(parse_quantity("30 Hz", Dimension::Rate).unwrap(), 30.0);
    }

    #[test]
    fn times_and_angles() {
        assert!((parse_quantity("120 us", Dimension::Time).unwrap() - 120e-6).abs() < 1e-18);
        assert!((parse_quantity("-0.5 pi", Dimension::Angle).unwrap() + PI / 2.0).abs() < 1e-15);
        assert!((parse_quantity("3.14 rad", Dimension::Angle).unwrap() - 3.14).abs() < 1e-15);
        assert!((parse_quantity("1.5e2us", Dimension::Time).unwrap() - 150e-6).abs() < 1e-18);
    }

    #[test]
    fn missing_or_wrong_units_are_rejected() {
        assert!(parse_quantity("125", Dimension::Frequency).unwrap_err().contains("missing unit"));
        assert!(parse_quantity("125 us", Dimension::Frequency).unwrap_err().contains("unknown unit"));
        assert!(parse_quantity("abc kHz", Dimension::Frequency).is_err());
    }

    #[test]
    fn format_round_trips() {
        let s = format_quantity(2.0 * PI * 47.3e3, Dimension::Frequency, "kHz");
        let back = parse_quantity(&s, Dimension::Frequency).unwrap();
        assert!((back - 2.0 * PI * 47.3e3).abs() < 1e-6);
    }
}
