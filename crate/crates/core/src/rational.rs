//! Exact rational numbers used everywhere in the evaluation core.
//!
//! All arithmetic is arbitrary precision; no floating point touches any
//! value that feeds an answer check. Values are kept in canonical form
//! (reduced, positive denominator) at all times.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Rem, Sub};
use std::str::FromStr;

/// Arbitrary-precision rational in canonical form: reduced fraction with a
/// positive denominator.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(BigRational);

impl Rational {
    pub fn new(numer: BigInt, denom: BigInt) -> Option<Self> {
        if denom.is_zero() {
            None
        } else {
            Some(Rational(BigRational::new(numer, denom)))
        }
    }

    pub fn from_int(n: i64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn from_frac(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "zero denominator");
        Rational(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    /// Floor toward negative infinity.
    pub fn floor(&self) -> Rational {
        Rational(self.0.floor())
    }

    /// Ceiling toward positive infinity.
    pub fn ceil(&self) -> Rational {
        Rational(self.0.ceil())
    }

    pub fn abs(&self) -> Rational {
        Rational(self.0.abs())
    }

    pub fn pow(&self, exp: u32) -> Rational {
        Rational(num_traits::pow::pow(self.0.clone(), exp as usize))
    }

    /// Euclidean remainder: both operands must be integers, the modulus
    /// nonzero. The result lies in `[0, |m|)`.
    pub fn mod_euclid(&self, m: &Rational) -> Option<Rational> {
        if !self.is_integer() || !m.is_integer() || m.is_zero() {
            return None;
        }
        let a = self.0.to_integer();
        let m = m.0.to_integer().abs();
        Some(Rational(BigRational::from_integer(a.mod_floor(&m))))
    }

    /// Exact conversion to `i64` when the value is an integer in range.
    pub fn to_i64(&self) -> Option<i64> {
        if self.is_integer() {
            self.0.to_integer().to_i64()
        } else {
            None
        }
    }

    /// Lossy conversion for analytics code (never used in answer checks).
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Parses `"-3"`, `"3/4"`, or an exact decimal like `"0.48"`.
    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Some((n, d)) = text.split_once('/') {
            let n = BigInt::from_str(n.trim()).ok()?;
            let d = BigInt::from_str(d.trim()).ok()?;
            return Rational::new(n, d);
        }
        if let Some((int_part, frac_part)) = text.split_once('.') {
            if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            let negative = int_part.trim_start().starts_with('-');
            let int = if int_part.is_empty() || int_part == "-" {
                BigInt::zero()
            } else {
                BigInt::from_str(int_part).ok()?
            };
            let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
            let frac = BigInt::from_str(frac_part).ok()?;
            let numer = int.abs() * &scale + frac;
            let numer = if negative { -numer } else { numer };
            return Rational::new(numer, scale);
        }
        BigInt::from_str(text).ok().map(|n| Rational(BigRational::from_integer(n)))
    }

    /// True when the denominator is of the form 2^i * 5^j, i.e. the value
    /// has a terminating decimal expansion.
    pub fn has_terminating_decimal(&self) -> bool {
        let mut d = self.denom().clone();
        for p in [2u32, 5] {
            let p = BigInt::from(p);
            while (&d % &p).is_zero() {
                d /= &p;
            }
        }
        d.is_one()
    }

    /// Terminating decimal string, or `None` if the expansion does not
    /// terminate.
    pub fn to_decimal_string(&self) -> Option<String> {
        if self.is_integer() {
            return Some(self.numer().to_string());
        }
        if !self.has_terminating_decimal() {
            return None;
        }
        let mut digits = 0u32;
        let mut scaled = self.0.clone();
        let ten = BigRational::from_integer(BigInt::from(10));
        while !scaled.is_integer() {
            scaled *= &ten;
            digits += 1;
        }
        let n = scaled.to_integer();
        let sign = if n.is_negative() { "-" } else { "" };
        let s = n.abs().to_string();
        let s = if s.len() <= digits as usize {
            format!("{}0.{}{}", sign, "0".repeat(digits as usize - s.len()), s)
        } else {
            let split = s.len() - digits as usize;
            format!("{}{}.{}", sign, &s[..split], &s[split..])
        };
        Some(s)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Rational {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rational::parse(s).ok_or_else(|| format!("invalid rational literal: {s:?}"))
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Rational::parse(&s).ok_or_else(|| serde::de::Error::custom("invalid rational"))
    }
}

impl From<i64> for Rational {
    fn from(n: i64) -> Self {
        Rational::from_int(n)
    }
}

impl From<BigInt> for Rational {
    fn from(n: BigInt) -> Self {
        Rational(BigRational::from_integer(n))
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for &Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                Rational((&self.0).$method(&rhs.0))
            }
        }
        impl $trait for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational(self.0.$method(rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);

impl Div for &Rational {
    type Output = Rational;
    /// Panics on division by zero; callers check first.
    fn div(self, rhs: &Rational) -> Rational {
        Rational(&self.0 / &rhs.0)
    }
}

impl Div for Rational {
    type Output = Rational;
    fn div(self, rhs: Rational) -> Rational {
        Rational(self.0 / rhs.0)
    }
}

impl Neg for &Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-&self.0)
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl Rem for &Rational {
    type Output = Rational;
    fn rem(self, rhs: &Rational) -> Rational {
        Rational(&self.0 % &rhs.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form() {
        let r = Rational::from_frac(48, 100);
        assert_eq!(r.numer(), &BigInt::from(12));
        assert_eq!(r.denom(), &BigInt::from(25));
        let r = Rational::from_frac(3, -6);
        assert_eq!(r.to_string(), "-1/2");
    }

    #[test]
    fn parse_forms() {
        assert_eq!(Rational::parse("0.48").unwrap(), Rational::from_frac(12, 25));
        assert_eq!(Rational::parse("3/4").unwrap(), Rational::from_frac(3, 4));
        assert_eq!(Rational::parse("-7").unwrap(), Rational::from_int(-7));
        assert_eq!(Rational::parse("-0.5").unwrap(), Rational::from_frac(-1, 2));
        assert_eq!(Rational::parse("12.5").unwrap(), Rational::from_frac(25, 2));
        assert!(Rational::parse("1/0").is_none());
        assert!(Rational::parse("abc").is_none());
    }

    #[test]
    fn floor_toward_negative_infinity() {
        assert_eq!(Rational::from_frac(-7, 2).floor(), Rational::from_int(-4));
        assert_eq!(Rational::from_frac(7, 2).floor(), Rational::from_int(3));
    }

    #[test]
    fn euclidean_mod() {
        let m = Rational::from_int(3);
        assert_eq!(Rational::from_int(-7).mod_euclid(&m).unwrap(), Rational::from_int(2));
        assert_eq!(Rational::from_int(7).mod_euclid(&Rational::from_int(-3)).unwrap(), Rational::from_int(1));
        assert!(Rational::from_frac(1, 2).mod_euclid(&m).is_none());
        assert!(Rational::from_int(7).mod_euclid(&Rational::zero()).is_none());
    }

    #[test]
    fn decimal_strings() {
        assert_eq!(Rational::from_frac(1, 2).to_decimal_string().unwrap(), "0.5");
        assert_eq!(Rational::from_frac(-1, 8).to_decimal_string().unwrap(), "-0.125");
        assert_eq!(Rational::from_frac(25, 2).to_decimal_string().unwrap(), "12.5");
        assert!(Rational::from_frac(5, 6).to_decimal_string().is_none());
        assert_eq!(Rational::from_int(10).to_decimal_string().unwrap(), "10");
    }

    #[test]
    fn serde_string_form() {
        let r = Rational::from_frac(83, 6);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, "\"83/6\"");
        let back: Rational = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
