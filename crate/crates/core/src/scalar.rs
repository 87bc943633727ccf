//! Scalar abstractions.
//!
//! Floating-point code is generic over [`Real`] (`f32`/`f64`); the exponent
//! algebra is generic over [`Exact`] (machine or big-integer rationals).

use std::fmt::{Debug, Display, LowerExp};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Float, FloatConst, FromPrimitive, One, Signed, ToPrimitive, Zero};

/// Floating point scalar used by the numerical modules.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + rustfft::FftNum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Width in bytes of the little-endian encoding.
    const BYTES: usize;
    /// Tag written into binary containers.
    const TYPE_TAG: u8;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("representable count")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f32 {
    const BYTES: usize = 4;
    const TYPE_TAG: u8 = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
}

impl Real for f64 {
    const BYTES: usize = 8;
    const TYPE_TAG: u8 = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

/// Exact ordered field used by the power-log exponent algebra.
pub trait Exact:
    Clone
    + Ord
    + Debug
    + Display
    + Signed
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + Send
    + Sync
    + 'static
{
    fn ratio(numer: i64, denom: i64) -> Self;

    fn int(n: i64) -> Self {
        Self::ratio(n, 1)
    }

    fn is_integer_valued(&self) -> bool;

    /// Smallest integer not below `self`.
    fn ceil_i64(&self) -> i64;

    fn approx_f64(&self) -> f64;

    /// Parses `a/b`, an integer, or a finite decimal such as `2.45`.
    fn parse_exact(text: &str) -> Result<Self, String>;
}

fn split_decimal(text: &str) -> Result<(BigInt, BigInt), String> {
    let t = text.trim();
    if t.is_empty() {
        return Err("empty rational literal".into());
    }
    if let Some((n, d)) = t.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|e| format!("bad numerator in {t:?}: {e}"))?;
        let d = BigInt::from_str(d.trim()).map_err(|e| format!("bad denominator in {t:?}: {e}"))?;
        if d.is_zero() {
            return Err(format!("zero denominator in {t:?}"));
        }
        return Ok((n, d));
    }
    if let Some((int_part, frac)) = t.split_once('.') {
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(format!("bad decimal literal {t:?}"));
        }
        let digits = format!("{int_part}{frac}");
        let n = BigInt::from_str(&digits).map_err(|e| format!("bad decimal literal {t:?}: {e}"))?;
        let d = num_traits::pow(BigInt::from(10), frac.len());
        return Ok((n, d));
    }
    let n = BigInt::from_str(t).map_err(|e| format!("bad integer literal {t:?}: {e}"))?;
    Ok((n, BigInt::one()))
}

impl Exact for BigRational {
    fn ratio(numer: i64, denom: i64) -> Self {
        BigRational::new(BigInt::from(numer), BigInt::from(denom))
    }

    fn is_integer_valued(&self) -> bool {
        self.is_integer()
    }

    fn ceil_i64(&self) -> i64 {
        self.ceil().to_integer().to_i64().expect("ceil fits in i64")
    }

    fn approx_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn parse_exact(text: &str) -> Result<Self, String> {
        let (n, d) = split_decimal(text)?;
        Ok(BigRational::new(n, d))
    }
}

impl Exact for Ratio<i64> {
    fn ratio(numer: i64, denom: i64) -> Self {
        Ratio::new(numer, denom)
    }

    fn is_integer_valued(&self) -> bool {
        self.is_integer()
    }

    fn ceil_i64(&self) -> i64 {
        self.ceil().to_integer()
    }

    fn approx_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }

    fn parse_exact(text: &str) -> Result<Self, String> {
        let (n, d) = split_decimal(text)?;
        let n = n.to_i64().ok_or_else(|| format!("{text:?} overflows i64"))?;
        let d = d.to_i64().ok_or_else(|| format!("{text:?} overflows i64"))?;
        Ok(Ratio::new(n, d))
    }
}

/// Converts an exact value into a floating-point scalar.
pub fn exact_to_real<Q: Exact, T: Real>(q: &Q) -> T {
    T::lit(q.approx_f64())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fraction_integer_and_decimal() {
        let q = BigRational::parse_exact("17/7").unwrap();
        assert_eq!(q, BigRational::ratio(17, 7));
        assert_eq!(BigRational::parse_exact("3").unwrap(), BigRational::int(3));
        assert_eq!(BigRational::parse_exact("2.45").unwrap(), BigRational::ratio(49, 20));
        assert_eq!(Ratio::<i64>::parse_exact(" 9/4 ").unwrap(), Ratio::new(9, 4));
        assert!(BigRational::parse_exact("1/0").is_err());
        assert!(BigRational::parse_exact("x").is_err());
    }

    #[test]
    fn ceil_and_integer_checks() {
        assert_eq!(BigRational::ratio(7, 2).ceil_i64(), 4);
        assert_eq!(BigRational::ratio(-7, 2).ceil_i64(), -3);
        assert!(Ratio::<i64>::int(4).is_integer_valued());
    }

    #[test]
    fn little_endian_round_trip() {
        let mut buf = Vec::new();
        1.5e-300f64.write_le(&mut buf);
        (-2.25f32).write_le(&mut buf);
        assert_eq!(f64::read_le(&buf[..8]), 1.5e-300);
        assert_eq!(f32::read_le(&buf[8..]), -2.25);
    }
}
