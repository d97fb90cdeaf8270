//! Numeric backends.
//!
//! Every model type is generic over a [`Scalar`]. Two backends ship:
//! [`Exact`] (arbitrary-precision rationals, used to check identities with
//! zero tolerance) and `f64` (used by the Monte Carlo paths and float mode).

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

/// Exact rational number.
pub type Exact = BigRational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NumericMode {
    Rational,
    Float,
}

impl fmt::Display for NumericMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumericMode::Rational => f.write_str("rational"),
            NumericMode::Float => f.write_str("float"),
        }
    }
}

impl FromStr for NumericMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rational" | "exact" => Ok(NumericMode::Rational),
            "float" | "f64" => Ok(NumericMode::Float),
            other => Err(format!("unknown numeric mode `{other}`")),
        }
    }
}

/// A field of probabilities and effect sizes.
pub trait Scalar:
    Signed + Clone + PartialOrd + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    const MODE: NumericMode;

    /// `num / den`; `den` must be nonzero.
    fn from_ratio(num: i64, den: i64) -> Self;

    /// Parses `"0.8"`, `"4/5"`, `"1e-3"` and integers.
    fn parse_text(text: &str) -> Option<Self>;

    /// Lossless-where-possible textual form that [`Scalar::parse_text`] reads back.
    fn to_text(&self) -> String;

    fn to_f64(&self) -> f64;

    /// Classification tolerance: 0 for rationals, 1e-12 for floats.
    fn default_tol() -> Self;

    /// Denominator guard for the IV ratio: 0 for rationals, 1e-9 for floats.
    fn default_weak_tol() -> Self;

    fn from_bool(b: bool) -> Self {
        if b {
            Self::one()
        } else {
            Self::zero()
        }
    }

    fn from_count(k: usize) -> Self {
        Self::from_ratio(k as i64, 1)
    }

    fn is_probability(&self) -> bool {
        *self >= Self::zero() && *self <= Self::one()
    }
}

impl Scalar for Exact {
    const MODE: NumericMode = NumericMode::Rational;

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn parse_text(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Some((n, d)) = text.split_once('/') {
            let n = BigInt::from_str(n.trim()).ok()?;
            let d = BigInt::from_str(d.trim()).ok()?;
            if d.is_zero() {
                return None;
            }
            return Some(BigRational::new(n, d));
        }
        parse_decimal(text)
    }

    fn to_text(&self) -> String {
        if self.is_integer() {
            self.numer().to_string()
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn default_tol() -> Self {
        Self::zero()
    }

    fn default_weak_tol() -> Self {
        Self::zero()
    }
}

impl Scalar for f64 {
    const MODE: NumericMode = NumericMode::Float;

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn parse_text(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Some((n, d)) = text.split_once('/') {
            let n: f64 = n.trim().parse().ok()?;
            let d: f64 = d.trim().parse().ok()?;
            if d == 0.0 {
                return None;
            }
            return Some(n / d);
        }
        let v: f64 = text.parse().ok()?;
        v.is_finite().then_some(v)
    }

    fn to_text(&self) -> String {
        // Display for f64 emits the shortest string that parses back to the same value.
        format!("{self}")
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn default_tol() -> Self {
        1e-12
    }

    fn default_weak_tol() -> Self {
        1e-9
    }
}

/// Exact parse of a decimal literal with optional sign and exponent.
fn parse_decimal(text: &str) -> Option<Exact> {
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut numer = BigInt::from_str(&all_digits).ok()?;
    if negative {
        numer = -numer;
    }
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10u32);
    let value = if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Some(value)
}

/// Largest element of an iterator of scalars, or zero when empty.
pub fn max_of<S: Scalar>(values: impl IntoIterator<Item = S>) -> S {
    values
        .into_iter()
        .fold(S::zero(), |acc, v| if v > acc { v } else { acc })
}

/// serde helpers: rationals serialize as `"num/den"` strings, floats as numbers.
pub mod serde_scalar {
    use super::Scalar;
    use serde::Serializer;

    pub fn serialize<S: Scalar, Z: Serializer>(value: &S, z: Z) -> Result<Z::Ok, Z::Error> {
        match S::MODE {
            super::NumericMode::Float => z.serialize_f64(value.to_f64()),
            super::NumericMode::Rational => z.serialize_str(&value.to_text()),
        }
    }

    pub mod option {
        use super::super::Scalar;
        use serde::Serializer;

        pub fn serialize<S: Scalar, Z: Serializer>(
            value: &Option<S>,
            z: Z,
        ) -> Result<Z::Ok, Z::Error> {
            match value {
                Some(v) => super::serialize(v, z),
                None => z.serialize_none(),
            }
        }
    }
}
