//! Fixed-point millimetre values.
//!
//! Values are stored as signed thousandths of a millimetre together with the
//! number of fractional digits they were written with, so `"1.95"` renders
//! back as `"1.95"` and never as `"1.950"` or `1.9500000000000002`.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Neg, Sub};
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Maximum number of fractional digits (micrometre resolution).
pub const MAX_SCALE: u8 = 3;

const UNITS_PER_MM: i64 = 1_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid decimal {input:?}: {reason}")]
pub struct DecimalError {
    pub input: String,
    pub reason: &'static str,
}

/// A decimal millimetre quantity with up to three fractional digits.
///
/// Equality and ordering compare the numeric value only; `2.0` equals `2.00`.
#[derive(Debug, Clone, Copy)]
pub struct Millimetres {
    thousandths: i64,
    scale: u8,
}

impl Millimetres {
    pub const ZERO: Millimetres = Millimetres {
        thousandths: 0,
        scale: 0,
    };

    /// Smallest representable positive step (0.001 mm).
    pub const EPSILON: Millimetres = Millimetres {
        thousandths: 1,
        scale: MAX_SCALE,
    };

    pub fn from_thousandths(thousandths: i64, scale: u8) -> Self {
        let scale = scale.min(MAX_SCALE);
        Self {
            thousandths,
            scale: scale.max(min_scale(thousandths)),
        }
    }

    pub fn thousandths(self) -> i64 {
        self.thousandths
    }

    /// Number of fractional digits used when rendering.
    pub fn scale(self) -> u8 {
        self.scale
    }

    pub fn abs(self) -> Self {
        Self {
            thousandths: self.thousandths.abs(),
            scale: self.scale,
        }
    }

    pub fn is_negative(self) -> bool {
        self.thousandths < 0
    }

    pub fn checked_sub(self, rhs: Self) -> Option<Self> {
        self.thousandths.checked_sub(rhs.thousandths).map(|t| Self {
            thousandths: t,
            scale: self.scale.max(rhs.scale),
        })
    }

    pub fn checked_add(self, rhs: Self) -> Option<Self> {
        self.thousandths.checked_add(rhs.thousandths).map(|t| Self {
            thousandths: t,
            scale: self.scale.max(rhs.scale),
        })
    }

    /// Renders with an explicit `+` for positive values, as in deviation columns.
    pub fn to_signed_string(self) -> String {
        if self.thousandths > 0 {
            format!("+{self}")
        } else {
            self.to_string()
        }
    }
}

fn min_scale(thousandths: i64) -> u8 {
    if thousandths % 10 != 0 {
        3
    } else if thousandths % 100 != 0 {
        2
    } else if thousandths % 1000 != 0 {
        1
    } else {
        0
    }
}

impl PartialEq for Millimetres {
    fn eq(&self, other: &Self) -> bool {
        self.thousandths == other.thousandths
    }
}

impl Eq for Millimetres {}

impl Hash for Millimetres {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.thousandths.hash(state);
    }
}

impl PartialOrd for Millimetres {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Millimetres {
    fn cmp(&self, other: &Self) -> Ordering {
        self.thousandths.cmp(&other.thousandths)
    }
}

impl Sub for Millimetres {
    type Output = Millimetres;

    fn sub(self, rhs: Self) -> Self {
        self.checked_sub(rhs)
            .expect("millimetre subtraction overflowed")
    }
}

impl Neg for Millimetres {
    type Output = Millimetres;

    fn neg(self) -> Self {
        Self {
            thousandths: -self.thousandths,
            scale: self.scale,
        }
    }
}

impl fmt::Display for Millimetres {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.thousandths < 0 { "-" } else { "" };
        let abs = self.thousandths.unsigned_abs();
        let int = abs / UNITS_PER_MM as u64;
        let frac = abs % UNITS_PER_MM as u64;
        if self.scale == 0 {
            return write!(f, "{sign}{int}");
        }
        let digits = format!("{frac:03}");
        write!(f, "{sign}{int}.{}", &digits[..self.scale as usize])
    }
}

impl FromStr for Millimetres {
    type Err = DecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason| DecimalError {
            input: s.to_owned(),
            reason,
        };
        let (negative, body) = match s.as_bytes().first() {
            Some(b'-') => (true, &s[1..]),
            Some(b'+') => (false, &s[1..]),
            Some(_) => (false, s),
            None => return Err(err("empty")),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, Some(f)),
            None => (body, None),
        };
        if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err("expected digits before the decimal point"));
        }
        let frac_part = frac_part.unwrap_or("");
        if body.contains('.') && frac_part.is_empty() {
            return Err(err("expected digits after the decimal point"));
        }
        if !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err("unexpected character"));
        }
        if frac_part.len() > MAX_SCALE as usize {
            return Err(err("more than three fractional digits"));
        }
        let int: i64 = int_part.parse().map_err(|_| err("value out of range"))?;
        let mut frac: i64 = if frac_part.is_empty() {
            0
        } else {
            frac_part.parse().unwrap()
        };
        for _ in frac_part.len()..MAX_SCALE as usize {
            frac *= 10;
        }
        let magnitude = int
            .checked_mul(UNITS_PER_MM)
            .and_then(|v| v.checked_add(frac))
            .ok_or_else(|| err("value out of range"))?;
        Ok(Self {
            thousandths: if negative { -magnitude } else { magnitude },
            scale: frac_part.len() as u8,
        })
    }
}

impl Serialize for Millimetres {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Millimetres {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct MmVisitor;

        impl Visitor<'_> for MmVisitor {
            type Value = Millimetres;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a decimal millimetre value, preferably string-encoded")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Millimetres, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Millimetres, E> {
                v.to_string().parse().map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Millimetres, E> {
                v.to_string().parse().map_err(E::custom)
            }

            // Shortest round-trip rendering of the float; exact for inputs
            // written with at most three fractional digits.
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Millimetres, E> {
                if !v.is_finite() {
                    return Err(E::custom("non-finite millimetre value"));
                }
                v.to_string().parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(MmVisitor)
    }
}
