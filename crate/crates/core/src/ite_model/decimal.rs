use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A fixed-point decimal with exactly three fraction digits, stored in thousandths.
///
/// ITE documents carry bounds and resolutions as strings such as `"100.000"`;
/// keeping them as integers makes range and resolution checks exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Decimal3(i64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("`{0}` is not a decimal with at most three fraction digits")]
pub struct DecimalError(pub String);

impl Decimal3 {
    pub const ZERO: Decimal3 = Decimal3(0);
    pub const ONE: Decimal3 = Decimal3(1000);

    pub const fn from_thousandths(thousandths: i64) -> Self {
        Decimal3(thousandths)
    }

    pub const fn from_int(value: i64) -> Self {
        Decimal3(value * 1000)
    }

    pub const fn thousandths(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn is_integral(self) -> bool {
        self.0 % 1000 == 0
    }

    /// Converts a float that sits exactly on the 0.001 grid.
    pub fn from_f64_exact(value: f64) -> Option<Self> {
        if !value.is_finite() {
            return None;
        }
        let scaled = value * 1000.0;
        let rounded = scaled.round();
        if (scaled - rounded).abs() > 1e-6 * scaled.abs().max(1.0) || rounded.abs() > 9e15 {
            return None;
        }
        Some(Decimal3(rounded as i64))
    }
}

impl fmt::Display for Decimal3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:03}", abs / 1000, abs % 1000)
    }
}

impl FromStr for Decimal3 {
    type Err = DecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || DecimalError(s.to_owned());
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty()
            || !int_part.bytes().all(|b| b.is_ascii_digit())
            || frac_part.len() > 3
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
            || (body.contains('.') && frac_part.is_empty())
        {
            return Err(err());
        }
        let int: i64 = int_part.parse().map_err(|_| err())?;
        let mut frac: i64 = 0;
        for (i, digit) in frac_part.bytes().enumerate() {
            frac += i64::from(digit - b'0') * 10_i64.pow(2 - i as u32);
        }
        let magnitude = int
            .checked_mul(1000)
            .and_then(|v| v.checked_add(frac))
            .ok_or_else(err)?;
        Ok(Decimal3(if negative { -magnitude } else { magnitude }))
    }
}

impl Serialize for Decimal3 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

struct Decimal3Visitor;

impl Visitor<'_> for Decimal3Visitor {
    type Value = Decimal3;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a decimal string such as \"1.000\" or a number")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Decimal3, E> {
        v.parse().map_err(E::custom)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Decimal3, E> {
        i64::try_from(v)
            .ok()
            .and_then(|v| v.checked_mul(1000))
            .map(Decimal3)
            .ok_or_else(|| E::custom(DecimalError(v.to_string())))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Decimal3, E> {
        v.checked_mul(1000)
            .map(Decimal3)
            .ok_or_else(|| E::custom(DecimalError(v.to_string())))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Decimal3, E> {
        Decimal3::from_f64_exact(v).ok_or_else(|| E::custom(DecimalError(v.to_string())))
    }
}

impl<'de> Deserialize<'de> for Decimal3 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(Decimal3Visitor)
    }
}
