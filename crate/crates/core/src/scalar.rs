//! Scalar abstraction for the exactly-computable network quantities.
//!
//! Traffic rates, hitting probabilities and drift margins only need field
//! arithmetic, so they are written once against [`Scalar`] and instantiated
//! with `f64`, `f32`, or [`BigRational`] when bit-exact answers are wanted.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Pow, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("`{text}` is not a decimal number")]
pub struct ParseDecimalError {
    pub text: String,
}

impl ParseDecimalError {
    fn new(text: &str) -> Self {
        Self {
            text: text.to_string(),
        }
    }
}

/// Field element used by the static analysis.
pub trait Scalar:
    Clone
    + fmt::Debug
    + fmt::Display
    + PartialOrd
    + Num
    + Signed
    + FromPrimitive
    + Send
    + Sync
    + 'static
{
    /// Magnitude below which a computed value is treated as a structural zero.
    fn negligible() -> Self;

    fn parse_decimal(text: &str) -> Result<Self, ParseDecimalError>;

    fn to_f64(&self) -> f64;

    fn is_negligible(&self) -> bool {
        self.abs() <= Self::negligible()
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in every scalar type")
    }

    fn powi(&self, exponent: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..exponent {
            acc = acc * self.clone();
        }
        acc
    }
}

impl Scalar for f64 {
    fn negligible() -> Self {
        1e-12
    }

    fn parse_decimal(text: &str) -> Result<Self, ParseDecimalError> {
        let value = f64::from_str(text.trim()).map_err(|_| ParseDecimalError::new(text))?;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(ParseDecimalError::new(text))
        }
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn powi(&self, exponent: u32) -> Self {
        f64::powi(*self, exponent as i32)
    }
}

impl Scalar for f32 {
    // Single precision cannot resolve 1e-12; use a threshold near its epsilon.
    fn negligible() -> Self {
        1e-6
    }

    fn parse_decimal(text: &str) -> Result<Self, ParseDecimalError> {
        let value = f32::from_str(text.trim()).map_err(|_| ParseDecimalError::new(text))?;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(ParseDecimalError::new(text))
        }
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }

    fn powi(&self, exponent: u32) -> Self {
        f32::powi(*self, exponent as i32)
    }
}

impl Scalar for BigRational {
    fn negligible() -> Self {
        BigRational::zero()
    }

    /// Accepts `[-]digits[.digits][e[-]digits]` and `p/q`.
    fn parse_decimal(text: &str) -> Result<Self, ParseDecimalError> {
        parse_rational(text.trim()).ok_or_else(|| ParseDecimalError::new(text))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn is_negligible(&self) -> bool {
        self.is_zero()
    }
}

fn parse_rational(text: &str) -> Option<BigRational> {
    if let Some((num, den)) = text.split_once('/') {
        let num = BigInt::from_str(num.trim()).ok()?;
        let den = BigInt::from_str(den.trim()).ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(BigRational::new(num, den));
    }
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(pos) => (&body[..pos], i64::from_str(&body[pos + 1..]).ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let digits = if digits.is_empty() { "0".to_string() } else { digits };
    let mut value = BigRational::from_integer(BigInt::from_str(&digits).ok()?);
    let scale = exponent - frac_part.len() as i64;
    let ten = BigRational::from_integer(BigInt::from(10));
    if scale >= 0 {
        value *= Pow::pow(&ten, scale as u64);
    } else {
        value /= Pow::pow(&ten, (-scale) as u64);
    }
    if negative {
        value = -value;
    }
    Some(value)
}

/// Exact rational from a finite `f64` (every finite double is a dyadic rational).
pub fn rational_from_f64(value: f64) -> Option<BigRational> {
    BigRational::from_float(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn parses_decimal_strings_exactly() {
        assert_eq!(BigRational::parse_decimal("0.8").unwrap(), rat(4, 5));
        assert_eq!(BigRational::parse_decimal("-1.25").unwrap(), rat(-5, 4));
        assert_eq!(BigRational::parse_decimal("3").unwrap(), rat(3, 1));
        assert_eq!(BigRational::parse_decimal("2.5e-3").unwrap(), rat(1, 400));
        assert_eq!(BigRational::parse_decimal("1e2").unwrap(), rat(100, 1));
        assert_eq!(BigRational::parse_decimal(".5").unwrap(), rat(1, 2));
        assert_eq!(BigRational::parse_decimal("7/3").unwrap(), rat(7, 3));
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", ".", "abc", "1.2.3", "1/0", "--1", "1e"] {
            assert!(BigRational::parse_decimal(bad).is_err(), "{bad}");
        }
        assert!(f64::parse_decimal("inf").is_err());
        assert!(f64::parse_decimal("NaN").is_err());
    }

    #[test]
    fn negligible_thresholds() {
        assert!(1e-13f64.is_negligible());
        assert!(!1e-11f64.is_negligible());
        assert!(!rat(1, 1_000_000_000_000_000).is_negligible());
        assert!(BigRational::zero().is_negligible());
    }

    #[test]
    fn integer_powers_agree() {
        assert_eq!(Scalar::powi(&rat(1, 10), 3), rat(1, 1000));
        assert!((Scalar::powi(&0.1f64, 3) - 1e-3).abs() < 1e-18);
    }
}
