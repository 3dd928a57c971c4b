use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::UetError;

/// Exact decimal number that remembers the literal it was written as.
///
/// Equality and hashing use the exact value, so `2`, `2.0` and `200%`
/// compare equal while each still prints as written.
#[derive(Clone)]
pub struct Decimal {
    literal: String,
    mantissa: BigInt,
    scale: u32,
}

impl Decimal {
    pub fn parse(literal: &str) -> Result<Self, UetError> {
        let bad = || UetError::MalformedNumber(literal.to_string());
        let s = literal.trim();
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (body, percent) = match body.strip_suffix('%') {
            Some(rest) => (rest, true),
            None => (body, false),
        };
        let mut digits = String::with_capacity(body.len());
        let mut scale = 0u32;
        let mut seen_dot = false;
        for ch in body.chars() {
            match ch {
                '0'..='9' => {
                    digits.push(ch);
                    if seen_dot {
                        scale += 1;
                    }
                }
                '.' if !seen_dot => seen_dot = true,
                _ => return Err(bad()),
            }
        }
        if digits.is_empty() {
            return Err(bad());
        }
        let mut mantissa: BigInt = digits.parse().map_err(|_| bad())?;
        if negative {
            mantissa = -mantissa;
        }
        if percent {
            scale += 2;
        }
        let mut d = Decimal {
            literal: s.to_string(),
            mantissa,
            scale,
        };
        d.normalize();
        Ok(d)
    }

    /// Builds `mantissa / 10^scale` with a canonical literal.
    pub fn from_parts(mantissa: BigInt, scale: u32) -> Self {
        let mut d = Decimal {
            literal: String::new(),
            mantissa,
            scale,
        };
        d.normalize();
        d.literal = d.canonical();
        d
    }

    /// Shortest decimal that reads back as exactly `v`.
    pub fn from_f64(v: f64) -> Option<Self> {
        if !v.is_finite() {
            return None;
        }
        // `{}` on f64 never uses exponent notation and round-trips.
        let v = if v == 0.0 { 0.0 } else { v };
        Decimal::parse(&format!("{v}")).ok()
    }

    fn normalize(&mut self) {
        let ten = BigInt::from(10);
        while self.scale > 0 && (&self.mantissa % &ten).is_zero() {
            self.mantissa /= &ten;
            self.scale -= 1;
        }
        if self.mantissa.is_zero() {
            self.scale = 0;
        }
    }

    pub fn literal(&self) -> &str {
        &self.literal
    }

    pub fn is_negative(&self) -> bool {
        self.mantissa.is_negative()
    }

    /// Plain decimal spelling of the value (no percent sign, no trailing zeros).
    pub fn canonical(&self) -> String {
        let digits = self.mantissa.abs().to_string();
        let sign = if self.mantissa.is_negative() { "-" } else { "" };
        let scale = self.scale as usize;
        if scale == 0 {
            return format!("{sign}{digits}");
        }
        if digits.len() > scale {
            let (int, frac) = digits.split_at(digits.len() - scale);
            format!("{sign}{int}.{frac}")
        } else {
            format!("{sign}0.{}{digits}", "0".repeat(scale - digits.len()))
        }
    }

    /// Copy whose literal is the canonical spelling.
    pub fn canonicalized(&self) -> Self {
        Decimal {
            literal: self.canonical(),
            mantissa: self.mantissa.clone(),
            scale: self.scale,
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.canonical().parse::<f64>().unwrap_or(f64::NAN)
    }

    pub fn to_rational(&self) -> BigRational {
        BigRational::new(self.mantissa.clone(), BigInt::from(10).pow(self.scale))
    }

    /// Integer value when the decimal has no fractional part.
    pub fn to_i64(&self) -> Option<i64> {
        if self.scale == 0 {
            self.mantissa.to_i64()
        } else {
            None
        }
    }
}

impl PartialEq for Decimal {
    fn eq(&self, other: &Self) -> bool {
        self.scale == other.scale && self.mantissa == other.mantissa
    }
}

impl Eq for Decimal {}

impl Hash for Decimal {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.mantissa.hash(state);
        self.scale.hash(state);
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.literal)
    }
}

impl fmt::Debug for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Decimal({})", self.literal)
    }
}

impl FromStr for Decimal {
    type Err = UetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Decimal::parse(s)
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.literal)
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Decimal::parse(&s).map_err(serde::de::Error::custom)
    }
}
