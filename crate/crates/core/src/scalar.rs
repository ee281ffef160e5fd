//! Exact rationals and tagged high-precision floats.
//!
//! Geometry (breakpoints, lengths, slopes, weight levels) is always exact.
//! Only powers with non-integer exponents leave the rationals, and those are
//! carried as MPFR floats that remember their significand width.

use std::fmt;

use rug::float::Round;
use rug::ops::Pow;
use rug::{Float, Integer, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PRECISION: u32 = 113;
pub const MIN_PRECISION: u32 = 80;

/// Significand width (in bits) used for transcendental evaluations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Precision(u32);

impl Precision {
    pub fn new(bits: u32) -> Result<Self> {
        if bits < MIN_PRECISION {
            return Err(Error::InvalidParameter(format!(
                "precision {bits} below the {MIN_PRECISION}-bit minimum"
            )));
        }
        Ok(Precision(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn zero(self) -> Float {
        Float::new(self.0)
    }

    pub fn float<T>(self, value: T) -> Float
    where
        Float: rug::Assign<T>,
    {
        Float::with_val(self.0, value)
    }

    /// Number of decimal digits that round-trip this precision.
    pub fn decimal_digits(self) -> usize {
        (self.0 as f64 * std::f64::consts::LOG10_2).ceil() as usize + 1
    }
}

impl Default for Precision {
    fn default() -> Self {
        Precision(DEFAULT_PRECISION)
    }
}

impl TryFrom<u32> for Precision {
    type Error = Error;
    fn try_from(bits: u32) -> Result<Self> {
        Precision::new(bits)
    }
}

impl From<Precision> for u32 {
    fn from(p: Precision) -> u32 {
        p.0
    }
}

/// Either an exact rational or a float tagged with its precision.
#[derive(Clone, Debug, PartialEq)]
pub enum Scalar {
    Exact(Rational),
    Approx(Float),
}

impl Scalar {
    pub fn exact<T>(value: T) -> Self
    where
        Rational: From<T>,
    {
        Scalar::Exact(Rational::from(value))
    }

    /// Precision tag, `None` for exact values.
    pub fn precision(&self) -> Option<u32> {
        match self {
            Scalar::Exact(_) => None,
            Scalar::Approx(f) => Some(f.prec()),
        }
    }

    pub fn as_rational(&self) -> Option<&Rational> {
        match self {
            Scalar::Exact(q) => Some(q),
            Scalar::Approx(_) => None,
        }
    }

    /// The value as an integer, if it is an exact integer that fits an `i32`.
    pub fn as_small_integer(&self) -> Option<i32> {
        let q = self.as_rational()?;
        if *q.denom() != 1 {
            return None;
        }
        q.numer().to_i32()
    }

    pub fn to_float(&self, prec: Precision) -> Float {
        match self {
            Scalar::Exact(q) => Float::with_val(prec.bits(), q),
            Scalar::Approx(f) => Float::with_val(prec.bits(), f),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Exact(q) => q.to_f64(),
            Scalar::Approx(f) => f.to_f64(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Exact(q) => *q == 0,
            Scalar::Approx(f) => f.is_zero(),
        }
    }
}

impl Scalar {
    /// Product, exact when both factors are.
    pub fn mul(&self, other: &Scalar, prec: Precision) -> Scalar {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(Rational::from(a * b)),
            _ => Scalar::Approx(self.to_float(prec) * other.to_float(prec)),
        }
    }

    /// Sum, exact when both terms are.
    pub fn add(&self, other: &Scalar, prec: Precision) -> Scalar {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(Rational::from(a + b)),
            _ => Scalar::Approx(self.to_float(prec) + other.to_float(prec)),
        }
    }

    pub fn sum<'a>(terms: impl IntoIterator<Item = &'a Scalar>, prec: Precision) -> Scalar {
        terms
            .into_iter()
            .fold(Scalar::Exact(Rational::new()), |acc, t| acc.add(t, prec))
    }
}

impl From<Rational> for Scalar {
    fn from(q: Rational) -> Self {
        Scalar::Exact(q)
    }
}

impl From<Float> for Scalar {
    fn from(f: Float) -> Self {
        Scalar::Approx(f)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(q) => write!(f, "{q}"),
            Scalar::Approx(x) => write!(f, "{}@{}", format_float(x), x.prec()),
        }
    }
}

/// `2^k` as an exact rational, for any sign of `k`.
pub fn pow2(k: i64) -> Rational {
    let mag = Integer::from(1) << (k.unsigned_abs() as u32);
    if k >= 0 {
        Rational::from(mag)
    } else {
        Rational::from((Integer::from(1), mag))
    }
}

/// Exact rational value of a finite double.
pub fn rational_from_f64(x: f64) -> Result<Rational> {
    Rational::from_f64(x).ok_or_else(|| Error::InvalidParameter(format!("non-finite value {x}")))
}

/// `base^exponent`, exact when the exponent is a small integer.
///
/// Zero bases are only valid with positive exponents; the caller guarantees
/// this (weights are positive, `|u'|^p` has `p > 0`).
pub fn power(base: &Rational, exponent: &Scalar, prec: Precision) -> Scalar {
    if let Some(k) = exponent.as_small_integer() {
        if k >= 0 {
            return Scalar::Exact(base.clone().pow(k as u32));
        }
        if *base != 0 {
            return Scalar::Exact(base.clone().recip().pow(k.unsigned_abs()));
        }
    }
    Scalar::Approx(power_float(base, &exponent.to_float(prec), prec))
}

/// `base^exponent` in floating point; `base` must be nonnegative.
pub fn power_float(base: &Rational, exponent: &Float, prec: Precision) -> Float {
    if *base == 0 {
        return Float::with_val(prec.bits(), 0);
    }
    if *base == 1 {
        return Float::with_val(prec.bits(), 1);
    }
    let b = Float::with_val(prec.bits(), base);
    b.pow(exponent)
}

/// Decimal rendering with enough digits to round-trip the float's precision.
pub fn format_float(x: &Float) -> String {
    let digits = Precision(x.prec().max(1)).decimal_digits();
    x.to_string_radix_round(10, Some(digits), Round::Nearest)
}

/// Parse a decimal rendering back into a float of the given precision.
pub fn parse_float(text: &str, prec: Precision) -> Result<Float> {
    Float::parse(text)
        .map(|p| Float::with_val(prec.bits(), p))
        .map_err(|e| Error::Serialization(format!("bad float {text:?}: {e}")))
}

/// Parse user-facing rational notation: `3`, `-7/16`, `0.125`, `2^-10`, `1e-3`.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let t = text.trim();
    let bad = || Error::InvalidParameter(format!("cannot parse {text:?} as a rational"));
    if let Some((base, exp)) = t.split_once('^') {
        let base: Rational = parse_rational(base)?;
        let exp: i32 = exp.trim().parse().map_err(|_| bad())?;
        if base == 0 && exp < 0 {
            return Err(bad());
        }
        return Ok(if exp >= 0 {
            base.pow(exp as u32)
        } else {
            base.recip().pow(exp.unsigned_abs())
        });
    }
    if let Some((n, d)) = t.split_once('/') {
        let n: Integer = n.trim().parse().map_err(|_| bad())?;
        let d: Integer = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Rational::from((n, d)));
    }
    if let Ok(i) = t.parse::<Integer>() {
        return Ok(Rational::from(i));
    }
    // Decimal or scientific notation, read exactly.
    let (mantissa, exp10) = match t.find(['e', 'E']) {
        Some(pos) => (&t[..pos], t[pos + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (t, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all: Integer = format!("{int_part}{frac_part}0").parse().map_err(|_| bad())?;
    let mut q = Rational::from((all, Integer::from(10)));
    let scale = exp10 - frac_part.len() as i32;
    let ten = Rational::from(10);
    q *= if scale >= 0 {
        ten.pow(scale as u32)
    } else {
        ten.recip().pow(scale.unsigned_abs())
    };
    if neg {
        q = -q;
    }
    Ok(q)
}
