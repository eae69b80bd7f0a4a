//! Dual-track scalar arithmetic: exact rationals that degrade to floats.
//!
//! A [`Scalar`] is either an exact `BigRational` or an `f64`. Arithmetic
//! stays exact as long as both operands are exact and the operation is
//! rational-closed; the first contact with a float (or an irrational
//! function) converts the whole result to `f64`. Downstream code can then
//! report "p/q" wherever the input data allowed it and a plain float where
//! it did not, without threading two parallel code paths everywhere.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::fmt;

/// Equality is structural: an exact value never equals a float, even at the
/// same numeric value. Use `cmp_val` or `close_to` to compare by value.
#[derive(Clone, Debug, PartialEq)]
pub enum Scalar {
    Exact(BigRational),
    Float(f64),
}

impl Scalar {
    pub fn zero() -> Self {
        Scalar::Exact(BigRational::zero())
    }

    pub fn one() -> Self {
        Scalar::Exact(BigRational::one())
    }

    pub fn from_int(n: i64) -> Self {
        Scalar::Exact(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn ratio(p: i64, q: i64) -> Self {
        assert!(q != 0, "zero denominator");
        Scalar::Exact(BigRational::new(BigInt::from(p), BigInt::from(q)))
    }

    /// Exact conversion; every finite f64 is a dyadic rational.
    pub fn from_f64_exact(x: f64) -> Option<Self> {
        BigRational::from_float(x).map(Scalar::Exact)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    pub fn as_exact(&self) -> Option<&BigRational> {
        match self {
            Scalar::Exact(r) => Some(r),
            Scalar::Float(_) => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Exact(r) => rat_to_f64(r),
            Scalar::Float(x) => *x,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Exact(r) => r.is_zero(),
            Scalar::Float(x) => *x == 0.0,
        }
    }

    pub fn is_negative(&self) -> bool {
        match self {
            Scalar::Exact(r) => r.is_negative(),
            Scalar::Float(x) => *x < 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Scalar::Exact(_) => true,
            Scalar::Float(x) => x.is_finite(),
        }
    }

    pub fn abs(&self) -> Scalar {
        match self {
            Scalar::Exact(r) => Scalar::Exact(r.abs()),
            Scalar::Float(x) => Scalar::Float(x.abs()),
        }
    }

    pub fn neg(&self) -> Scalar {
        match self {
            Scalar::Exact(r) => Scalar::Exact(-r),
            Scalar::Float(x) => Scalar::Float(-x),
        }
    }

    pub fn add(&self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a + b),
            _ => Scalar::Float(self.to_f64() + rhs.to_f64()),
        }
    }

    pub fn sub(&self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a - b),
            _ => Scalar::Float(self.to_f64() - rhs.to_f64()),
        }
    }

    pub fn mul(&self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a * b),
            _ => Scalar::Float(self.to_f64() * rhs.to_f64()),
        }
    }

    /// Division. Exact zero divisors are a caller bug here; expression
    /// evaluation guards divisors and reports a domain error instead.
    pub fn div(&self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => {
                assert!(!b.is_zero(), "exact division by zero");
                Scalar::Exact(a / b)
            }
            _ => Scalar::Float(self.to_f64() / rhs.to_f64()),
        }
    }

    pub fn recip(&self) -> Scalar {
        Scalar::one().div(self)
    }

    /// Integer power; exact base stays exact.
    pub fn pow_int(&self, n: i32) -> Scalar {
        match self {
            Scalar::Exact(r) => {
                if n >= 0 {
                    Scalar::Exact(r.pow(n))
                } else {
                    assert!(!r.is_zero(), "zero to a negative power");
                    Scalar::Exact(r.pow(n))
                }
            }
            Scalar::Float(x) => Scalar::Float(x.powi(n)),
        }
    }

    /// Square root; stays exact when the rational is a perfect square.
    pub fn sqrt(&self) -> Scalar {
        match self {
            Scalar::Exact(r) => {
                if let Some(root) = rat_sqrt_exact(r) {
                    Scalar::Exact(root)
                } else {
                    Scalar::Float(rat_to_f64(r).sqrt())
                }
            }
            Scalar::Float(x) => Scalar::Float(x.sqrt()),
        }
    }

    pub fn min(&self, rhs: &Scalar) -> Scalar {
        if self.cmp_val(rhs) == Ordering::Greater {
            rhs.clone()
        } else {
            self.clone()
        }
    }

    pub fn max(&self, rhs: &Scalar) -> Scalar {
        if self.cmp_val(rhs) == Ordering::Less {
            rhs.clone()
        } else {
            self.clone()
        }
    }

    /// Total order on values: exact-exact pairs compare exactly, everything
    /// else through f64 (NaN sorts as equal, callers reject NaN upstream).
    pub fn cmp_val(&self, rhs: &Scalar) -> Ordering {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => a.cmp(b),
            _ => self
                .to_f64()
                .partial_cmp(&rhs.to_f64())
                .unwrap_or(Ordering::Equal),
        }
    }

    /// Loose equality used when matching user-supplied boxes: exact when
    /// possible, 1e-12 absolute tolerance otherwise.
    pub fn close_to(&self, rhs: &Scalar) -> bool {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => a == b,
            _ => (self.to_f64() - rhs.to_f64()).abs() <= 1e-12,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(r) => {
                if r.denom().is_one() {
                    write!(f, "{}", r.numer())
                } else {
                    write!(f, "{}/{}", r.numer(), r.denom())
                }
            }
            Scalar::Float(x) => write!(f, "{x}"),
        }
    }
}

/// Rational to nearest f64.
pub fn rat_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact square root of a nonnegative rational, if it is a perfect square.
pub fn rat_sqrt_exact(r: &BigRational) -> Option<BigRational> {
    if r.is_negative() {
        return None;
    }
    let n = r.numer().sqrt();
    let d = r.denom().sqrt();
    if &(&n * &n) == r.numer() && &(&d * &d) == r.denom() {
        Some(BigRational::new(n, d))
    } else {
        None
    }
}

/// Parses a numeric literal: `p/q`, a plain integer, or a decimal with an
/// optional exponent (`0.25`, `1e-3`). Always exact.
pub fn parse_rational(text: &str) -> Option<BigRational> {
    let text = text.trim();
    let (sign, rest) = match text.strip_prefix('-') {
        Some(r) => (-1, r),
        None => (1, text.strip_prefix('+').unwrap_or(text)),
    };
    let rest = rest.trim();
    if let Some((num, den)) = rest.split_once('/') {
        let n: BigInt = num.trim().parse().ok()?;
        let d: BigInt = den.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(BigInt::from(sign) * n, d));
    }
    parse_decimal(rest).map(|r| if sign < 0 { -r } else { r })
}

fn parse_decimal(text: &str) -> Option<BigRational> {
    let (mantissa, exp10) = match text.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let n: BigInt = if digits.is_empty() {
        return None;
    } else {
        digits.parse().ok()?
    };
    let scale = exp10 - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut r = BigRational::from_integer(n);
    if scale >= 0 {
        r *= BigRational::from_integer(ten.pow(scale as u32));
    } else {
        r /= BigRational::from_integer(ten.pow((-scale) as u32));
    }
    Some(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    #[test]
    fn exact_arithmetic_stays_exact() {
        let a = Scalar::ratio(1, 3);
        let b = Scalar::ratio(1, 6);
        let sum = a.add(&b);
        assert_eq!(sum.as_exact(), Some(&rat(1, 2)));
        let prod = a.mul(&b);
        assert_eq!(prod.as_exact(), Some(&rat(1, 18)));
    }

    #[test]
    fn float_contact_degrades() {
        let a = Scalar::ratio(1, 3);
        let b = Scalar::Float(0.5);
        assert!(!a.add(&b).is_exact());
        assert_eq!(a.add(&b).to_f64(), 1.0 / 3.0 + 0.5);
    }

    #[test]
    fn sqrt_perfect_square_is_exact() {
        let s = Scalar::ratio(9, 4).sqrt();
        assert_eq!(s.as_exact(), Some(&rat(3, 2)));
        assert!(!Scalar::from_int(2).sqrt().is_exact());
    }

    #[test]
    fn pow_negative_exponent() {
        let s = Scalar::ratio(2, 3).pow_int(-2);
        assert_eq!(s.as_exact(), Some(&rat(9, 4)));
    }

    #[test]
    fn parses_literals() {
        assert_eq!(parse_rational("3/4"), Some(rat(3, 4)));
        assert_eq!(parse_rational("-3/4"), Some(rat(-3, 4)));
        assert_eq!(parse_rational("0.25"), Some(rat(1, 4)));
        assert_eq!(parse_rational("1e-3"), Some(rat(1, 1000)));
        assert_eq!(parse_rational("2.5e2"), Some(rat(250, 1)));
        assert_eq!(parse_rational("17"), Some(rat(17, 1)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("abc"), None);
    }

    #[test]
    fn display_forms() {
        assert_eq!(Scalar::ratio(3, 4).to_string(), "3/4");
        assert_eq!(Scalar::from_int(8).to_string(), "8");
        assert_eq!(Scalar::Float(0.125).to_string(), "0.125");
    }

    #[test]
    fn ordering_mixes_tracks() {
        let a = Scalar::ratio(1, 4);
        let b = Scalar::Float(0.6089);
        assert_eq!(a.min(&b).as_exact(), Some(&rat(1, 4)));
        assert_eq!(a.max(&b).to_f64(), 0.6089);
    }
}
