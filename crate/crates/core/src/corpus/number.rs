use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::uet::Decimal;

/// A numeric token recognised in problem text.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberLiteral {
    pub literal: String,
    pub value: Decimal,
    pub is_fraction: bool,
}

/// Recognises integers, decimals, percents, `a/b`, `(a/b)` and mixed `a(b/c)`.
pub fn parse_number_literal(token: &str) -> Option<NumberLiteral> {
    let t = token.trim();
    if t.is_empty() {
        return None;
    }
    let lit = |value: Decimal, is_fraction: bool| NumberLiteral {
        literal: t.to_string(),
        value,
        is_fraction,
    };
    if t.bytes().all(|b| b.is_ascii_digit() || b == b'.' || b == b'%') {
        if t.bytes().filter(|&b| b == b'%').count() > 1 || (t.contains('%') && !t.ends_with('%')) {
            return None;
        }
        return Decimal::parse(t).ok().map(|d| lit(d, false));
    }
    // mixed number a(b/c)
    if let Some(open) = t.find('(') {
        if !t.ends_with(')') {
            return None;
        }
        let whole = &t[..open];
        let frac = fraction_value(&t[open + 1..t.len() - 1])?;
        let value = if whole.is_empty() {
            frac
        } else {
            Decimal::parse(whole).ok()?.to_rational() + frac
        };
        return Some(lit(rational_to_decimal(&value)?, true));
    }
    let value = fraction_value(t)?;
    Some(lit(rational_to_decimal(&value)?, true))
}

fn fraction_value(s: &str) -> Option<BigRational> {
    let (a, b) = s.split_once('/')?;
    let num = Decimal::parse(a).ok()?;
    let den = Decimal::parse(b).ok()?;
    if num.is_negative() || den.is_negative() || a.contains('%') || b.contains('%') {
        return None;
    }
    let den = den.to_rational();
    if den.is_zero() {
        return None;
    }
    Some(num.to_rational() / den)
}

/// Exact decimal when the denominator only has factors 2 and 5, otherwise
/// the shortest decimal of the nearest f64.
pub fn rational_to_decimal(r: &BigRational) -> Option<Decimal> {
    let mut den = r.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let (mut twos, mut fives) = (0u32, 0u32);
    while den.is_even() {
        den /= &two;
        twos += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        fives += 1;
    }
    if den == BigInt::from(1) {
        let scale = twos.max(fives);
        let scaled = r * BigRational::from_integer(BigInt::from(10).pow(scale));
        return Some(Decimal::from_parts(scaled.to_integer(), scale));
    }
    Decimal::from_f64(r.to_f64()?)
}
