//! Exact rational scalars and their text forms.
//!
//! All model quantities (times, costs, penalties) are reduced fractions over
//! `i128`. `num_rational::Ratio` keeps values normalised, so equality is
//! canonical and `a == b` means exact mathematical equality.

use num_traits::Signed;
use thiserror::Error;

/// Exact rational scalar used throughout the engine.
pub type Rational = num_rational::Ratio<i128>;

/// Costs share the time unit (the value of time is one).
pub type Cost = Rational;

/// Shorthand for an integer-valued rational.
pub fn rat(n: i128) -> Rational {
    Rational::from_integer(n)
}

/// Shorthand for `n/d`.
///
/// # Panics
/// Panics if `d == 0`.
pub fn ratio(n: i128, d: i128) -> Rational {
    Rational::new(n, d)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RationalParseError {
    #[error("empty rational literal")]
    Empty,
    #[error("invalid rational literal `{0}`")]
    Invalid(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
    #[error("rational literal `{0}` overflows the supported range")]
    Overflow(String),
}

/// Largest numerator/denominator magnitude a parsed literal may carry.
///
/// Bounding parsed values keeps all downstream rational arithmetic far from
/// `i128` overflow; any sane model constant fits with enormous headroom.
pub const MAX_PARSE_MAGNITUDE: i128 = 1_000_000_000_000_000_000; // 10^18

/// Parses `p/q`, integer, or decimal literals into an exact rational.
///
/// Decimals convert exactly (`0.01` becomes `1/100`); no floating point is
/// involved at any stage. Components larger than [`MAX_PARSE_MAGNITUDE`] in
/// reduced form are rejected.
pub fn parse_rational(input: &str) -> Result<Rational, RationalParseError> {
    let s = input.trim();
    if s.is_empty() {
        return Err(RationalParseError::Empty);
    }
    let invalid = || RationalParseError::Invalid(input.to_string());
    let overflow = || RationalParseError::Overflow(input.to_string());
    let bounded = |value: Rational| {
        if value.numer().abs() > MAX_PARSE_MAGNITUDE || *value.denom() > MAX_PARSE_MAGNITUDE {
            Err(overflow())
        } else {
            Ok(value)
        }
    };

    if let Some((num, den)) = s.split_once('/') {
        let n: i128 = num.trim().parse().map_err(|_| invalid())?;
        let d: i128 = den.trim().parse().map_err(|_| invalid())?;
        if d == 0 {
            return Err(RationalParseError::ZeroDenominator(input.to_string()));
        }
        return bounded(Rational::new(n, d));
    }

    if let Some((int_part, frac_part)) = s.split_once('.') {
        // Exact decimal expansion: sign applies to both parts.
        let (sign, int_digits) = match int_part.trim() {
            t if t.starts_with('-') => (-1i128, &t[1..]),
            t if t.starts_with('+') => (1, &t[1..]),
            t => (1, t),
        };
        let frac_digits = frac_part.trim();
        if frac_digits.is_empty() && int_digits.is_empty() {
            return Err(invalid());
        }
        if !int_digits.chars().all(|c| c.is_ascii_digit())
            || !frac_digits.chars().all(|c| c.is_ascii_digit())
        {
            return Err(invalid());
        }
        // 18 digits per part keeps intermediate products inside i128.
        if frac_digits.len() > 18 || int_digits.len() > 18 {
            return Err(overflow());
        }
        let whole: i128 = if int_digits.is_empty() {
            0
        } else {
            int_digits.parse().map_err(|_| invalid())?
        };
        let mut value = rat(whole);
        if !frac_digits.is_empty() {
            let numer: i128 = frac_digits.parse().map_err(|_| invalid())?;
            let mut denom = 1i128;
            for _ in 0..frac_digits.len() {
                denom *= 10;
            }
            value += Rational::new(numer, denom);
        }
        return bounded(value * rat(sign));
    }

    let n: i128 = s.parse().map_err(|_| invalid())?;
    bounded(rat(n))
}

/// Renders the reduced fraction (`-3/40`, or `5` when the denominator is 1).
pub fn exact_string(value: &Rational) -> String {
    value.to_string()
}

/// Fixed-point decimal rendering with `places` digits, rounding half away
/// from zero. This is the single rounding rule for every decimal column the
/// engine emits, so decimal output is always a deterministic function of the
/// exact value.
pub fn decimal_string(value: &Rational, places: u32) -> String {
    let mut scale = rat(1);
    for _ in 0..places {
        scale *= rat(10);
    }
    let scaled = value * scale;
    let negative = scaled < rat(0);
    let magnitude = if negative { -scaled } else { scaled };
    let floor = magnitude.floor().to_integer();
    let frac = magnitude - rat(floor);
    let rounded = if frac * rat(2) >= rat(1) { floor + 1 } else { floor };
    let negative = negative && rounded != 0;
    let mag = rounded.unsigned_abs();
    let digits = mag.to_string();
    let places = places as usize;
    let (int_part, frac_part) = if digits.len() > places {
        let split = digits.len() - places;
        (digits[..split].to_string(), digits[split..].to_string())
    } else {
        ("0".to_string(), format!("{digits:0>places$}"))
    };
    let sign = if negative { "-" } else { "" };
    if places == 0 {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac_part}")
    }
}

/// Lossy conversion for reporting (never used in model arithmetic). Exact to
/// one rounding for the magnitudes the engine produces (components < 2^53).
pub fn to_f64(value: &Rational) -> f64 {
    *value.numer() as f64 / *value.denom() as f64
}

/// True if `value` is an integer multiple of `unit` (`unit > 0`).
pub fn is_multiple_of(value: &Rational, unit: &Rational) -> bool {
    debug_assert!(unit.is_positive());
    (value / unit).is_integer()
}

/// Exact quotient `value / unit` when it is an integer, else `None`.
pub fn exact_quotient(value: &Rational, unit: &Rational) -> Option<i128> {
    let q = value / unit;
    q.is_integer().then(|| q.to_integer())
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fraction_integer_and_decimal() {
        assert_eq!(parse_rational("1/2").unwrap(), ratio(1, 2));
        assert_eq!(parse_rational("-3/6").unwrap(), ratio(-1, 2));
        assert_eq!(parse_rational("7").unwrap(), rat(7));
        assert_eq!(parse_rational("0.01").unwrap(), ratio(1, 100));
        assert_eq!(parse_rational("-79.5").unwrap(), ratio(-159, 2));
        assert_eq!(parse_rational(" 2.50 ").unwrap(), ratio(5, 2));
        assert_eq!(parse_rational(".5").unwrap(), ratio(1, 2));
    }

    #[test]
    fn rejects_malformed_literals() {
        assert!(parse_rational("").is_err());
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("a/b").is_err());
        assert!(parse_rational("1.2.3").is_err());
        assert!(parse_rational("1e3").is_err());
        assert!(parse_rational("--2").is_err());
    }

    #[test]
    fn decimal_rendering_rounds_half_away_from_zero() {
        assert_eq!(decimal_string(&ratio(1, 2), 0), "1");
        assert_eq!(decimal_string(&ratio(-1, 2), 0), "-1");
        assert_eq!(decimal_string(&ratio(1, 3), 6), "0.333333");
        assert_eq!(decimal_string(&ratio(2, 3), 6), "0.666667");
        assert_eq!(decimal_string(&ratio(-159, 2), 2), "-79.50");
        assert_eq!(decimal_string(&rat(40), 6), "40.000000");
    }

    #[test]
    fn multiples_are_detected_exactly() {
        assert!(is_multiple_of(&rat(80), &ratio(1, 100)));
        assert!(!is_multiple_of(&ratio(4, 5), &rat(1)));
        assert_eq!(exact_quotient(&rat(3), &ratio(1, 100)), Some(300));
        assert_eq!(exact_quotient(&ratio(4, 5), &rat(1)), None);
    }
}
