//! Exact rational scalars and their text encodings.
//!
//! Instance files carry every number as an exact `"p/q"` string; decimal
//! literals are rejected so no value is silently rounded on the way in.

use num::bigint::BigInt;
use num::{BigRational, One, Signed, ToPrimitive, Zero};

use crate::{Error, Result};

/// The canonical scalar type of the crate.
pub type Q = BigRational;

/// `n/d` as an exact rational.
pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Integer as an exact rational.
pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

fn parse_int(s: &str) -> Result<BigInt> {
    if s.is_empty() {
        return Err(Error::MalformedInput("empty numeric field".into()));
    }
    let body = s.strip_prefix('-').unwrap_or(s);
    if body.is_empty() || !body.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::MalformedInput(format!(
            "`{s}` is not an exact rational; decimals are rejected, use p/q"
        )));
    }
    s.parse::<BigInt>()
        .map_err(|e| Error::MalformedInput(format!("`{s}`: {e}")))
}

/// Parses `"p"` or `"p/q"`. Anything else (notably decimal floats) errors.
pub fn parse_rational(s: &str) -> Result<Q> {
    let s = s.trim();
    match s.split_once('/') {
        None => Ok(Q::from_integer(parse_int(s)?)),
        Some((num, den)) => {
            let num = parse_int(num)?;
            let den = parse_int(den)?;
            if den.is_zero() {
                return Err(Error::MalformedInput(format!("`{s}` has a zero denominator")));
            }
            Ok(Q::new(num, den))
        }
    }
}

/// Renders in the same form `parse_rational` accepts.
pub fn format_rational(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Fixed-point decimal rendering by long division (round toward zero).
pub fn decimal_string(x: &Q, digits: usize) -> String {
    let sign = if x.is_negative() { "-" } else { "" };
    let a = x.abs();
    let int = a.to_integer();
    let mut rem = a.fract();
    let mut frac = String::with_capacity(digits);
    for _ in 0..digits {
        rem *= Q::from_integer(BigInt::from(10));
        let d = rem.to_integer();
        frac.push(char::from(b'0' + d.to_u8().unwrap_or(0)));
        rem = rem.fract();
    }
    if digits == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac}")
    }
}

/// Lossy float view, for reporting only.
pub fn to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Truncated exponential series: `sum_{i<=terms} x^i / i!` for `x >= 0`.
///
/// A rational lower bound of `e^x` that still dominates `1 + x`, which is
/// the property the exponential pacing rule needs.
pub fn exp_lower_bound(x: &Q, terms: u32) -> Q {
    debug_assert!(!x.is_negative());
    let mut term = Q::one();
    let mut sum = Q::one();
    for i in 1..=terms {
        term = term * x / Q::from_integer(BigInt::from(i));
        sum += term.clone();
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_integers_and_fractions() {
        assert_eq!(parse_rational("3").unwrap(), qi(3));
        assert_eq!(parse_rational("-7/2").unwrap(), q(-7, 2));
        assert_eq!(parse_rational(" 22/4 ").unwrap(), q(11, 2));
    }

    #[test]
    fn rejects_decimals_and_garbage() {
        assert!(parse_rational("0.5").is_err());
        assert!(parse_rational("1e3").is_err());
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("").is_err());
        assert!(parse_rational("a/b").is_err());
    }

    #[test]
    fn round_trips() {
        for s in ["0", "5", "-3", "1/3", "-22/7"] {
            let x = parse_rational(s).unwrap();
            assert_eq!(parse_rational(&format_rational(&x)).unwrap(), x);
        }
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(decimal_string(&q(1, 4), 3), "0.250");
        assert_eq!(decimal_string(&q(-1, 3), 4), "-0.3333");
        assert_eq!(decimal_string(&qi(2), 0), "2");
    }

    #[test]
    fn exp_series_dominates_linear() {
        for (n, d) in [(1i64, 10i64), (1, 2), (2, 1), (7, 3)] {
            let x = q(n, d);
            let e = exp_lower_bound(&x, 12);
            assert!(e >= Q::one() + x);
        }
    }
}
