//! Physical quantities in config files. Every value carries a unit suffix.

use std::f64::consts::{PI, TAU};
use std::fmt;

use ladderprobe_core::constants::PLANCK;
use serde::de::{self, Deserializer, Visitor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Inductance,
    Capacitance,
    /// Joules, or a frequency read as `E/h`.
    Energy,
    /// Angular rate; cyclic-frequency units are multiplied by 2π.
    Rate,
    Time,
    Current,
    Angle,
}

impl Kind {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Kind::Inductance => {
                &[("H", 1.0), ("mH", 1e-3), ("uH", 1e-6), ("µH", 1e-6), ("nH", 1e-9), ("pH", 1e-12)]
            }
            Kind::Capacitance => {
                &[("F", 1.0), ("uF", 1e-6), ("µF", 1e-6), ("nF", 1e-9), ("pF", 1e-12), ("fF", 1e-15)]
            }
            Kind::Energy => &[
                ("J", 1.0),
                ("Hz", PLANCK),
                ("kHz", PLANCK * 1e3),
                ("MHz", PLANCK * 1e6),
                ("GHz", PLANCK * 1e9),
            ],
            Kind::Rate => &[
                ("rad/s", 1.0),
                ("1/s", 1.0),
                ("/s", 1.0),
                ("Hz", TAU),
                ("kHz", TAU * 1e3),
                ("MHz", TAU * 1e6),
                ("GHz", TAU * 1e9),
            ],
            Kind::Time => {
                &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6), ("µs", 1e-6), ("ns", 1e-9), ("ps", 1e-12)]
            }
            Kind::Current => {
                &[("A", 1.0), ("mA", 1e-3), ("uA", 1e-6), ("µA", 1e-6), ("nA", 1e-9), ("pA", 1e-12)]
            }
            Kind::Angle => &[("rad", 1.0), ("pi", PI), ("deg", PI / 180.0)],
        }
    }

    fn example(self) -> &'static str {
        match self {
            Kind::Inductance => "\"254 pH\"",
            Kind::Capacitance => "\"100 fF\"",
            Kind::Energy => "\"3 GHz\"",
            Kind::Rate => "\"1.2 kHz\"",
            Kind::Time => "\"5 ms\"",
            Kind::Current => "\"1 nA\"",
            Kind::Angle => "\"pi/2\"",
        }
    }
}

/// Parses `"<number> <unit>"` (the space is optional). Angles also accept
/// `pi/<k>`.
pub fn parse(text: &str, kind: Kind) -> Result<f64, String> {
    let t = text.trim();
    if kind == Kind::Angle {
        if let Some(den) = t.strip_prefix("pi/") {
            let d: f64 = den.trim().parse().map_err(|_| format!("cannot parse angle {t:?}"))?;
            return Ok(PI / d);
        }
    }
    let split = t
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .unwrap_or(t.len());
    // `e` may start a unit rather than an exponent; back off until the number parses.
    let (mut num, mut unit) = t.split_at(split);
    while !num.is_empty() && num.parse::<f64>().is_err() {
        let cut = num.len() - 1;
        num = &t[..cut];
        unit = &t[cut..];
    }
    let unit = unit.trim();
    let value: f64 = if num.is_empty() && kind == Kind::Angle && unit == "pi" {
        1.0
    } else {
        num.parse().map_err(|_| format!("cannot parse a number from {t:?}"))?
    };
    if unit.is_empty() {
        return Err(format!("{t:?} has no unit; write e.g. {}", kind.example()));
    }
    let scale = kind.units().iter().find(|(u, _)| *u == unit).map(|(_, s)| *s).ok_or_else(|| {
        let known: Vec<&str> = kind.units().iter().map(|(u, _)| *u).collect();
        format!("unknown unit {unit:?} in {t:?}; expected one of {}", known.join(", "))
    })?;
    let out = value * scale;
    if !out.is_finite() {
        return Err(format!("{t:?} is not finite"));
    }
    Ok(out)
}

struct QuantityVisitor(Kind);

impl Visitor<'_> for QuantityVisitor {
    type Value = f64;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "a string with a unit such as {}", self.0.example())
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
        parse(v, self.0).map_err(E::custom)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
        Err(E::custom(format!("bare number {v} needs a unit, e.g. {}", self.0.example())))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
        Err(E::custom(format!("bare number {v} needs a unit, e.g. {}", self.0.example())))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
        Err(E::custom(format!("bare number {v} needs a unit, e.g. {}", self.0.example())))
    }
}

macro_rules! quantity {
    ($name:ident, $kind:expr) => {
        #[derive(Debug, Clone, Copy, PartialEq)]
        pub struct $name(pub f64);

        impl<'de> serde::Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                d.deserialize_any(QuantityVisitor($kind)).map($name)
            }
        }
    };
}

quantity!(Inductance, Kind::Inductance);
quantity!(Capacitance, Kind::Capacitance);
quantity!(Energy, Kind::Energy);
quantity!(Rate, Kind::Rate);
quantity!(Time, Kind::Time);
quantity!(Current, Kind::Current);
quantity!(Angle, Kind::Angle);
