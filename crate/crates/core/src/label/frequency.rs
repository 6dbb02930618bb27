//! Leak-rate frequencies attached to timing tags.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::text::{parse_frequency_at, LabelParseError};

/// A non-negative leak rate in bits per simulated tick, or unbounded.
///
/// Finite values are exact rationals kept in lowest terms. The derived
/// ordering places every finite rate below [`Frequency::Infinity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Frequency {
    Finite(Ratio<u64>),
    Infinity,
}

impl Frequency {
    pub const ZERO: Frequency = Frequency::Finite(Ratio::new_raw(0, 1));

    /// Builds `num/den`, reducing to lowest terms. Returns `None` when `den == 0`.
    pub fn new(num: u64, den: u64) -> Option<Self> {
        if den == 0 {
            return None;
        }
        Some(Frequency::Finite(Ratio::new(num, den)))
    }

    pub fn integer(n: u64) -> Self {
        Frequency::Finite(Ratio::from_integer(n))
    }

    /// One release per `period` ticks.
    pub fn per_period(period: u64) -> Option<Self> {
        Self::new(1, period)
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Frequency::Finite(_))
    }

    pub fn as_ratio(&self) -> Option<Ratio<u64>> {
        match self {
            Frequency::Finite(r) => Some(*r),
            Frequency::Infinity => None,
        }
    }

    /// The whole number of ticks between releases when this rate is
    /// `1/n` for some positive integer `n`.
    pub fn unit_period(&self) -> Option<u64> {
        match self {
            Frequency::Finite(r) if *r.numer() == 1 => Some(*r.denom()),
            _ => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Frequency::Finite(r) => *r.numer() as f64 / *r.denom() as f64,
            Frequency::Infinity => f64::INFINITY,
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frequency::Infinity => f.write_str("inf"),
            Frequency::Finite(r) if r.is_zero() => f.write_str("0"),
            Frequency::Finite(r) if *r.denom() == 1 => write!(f, "{}", r.numer()),
            Frequency::Finite(r) => write!(f, "{}/{}", r.numer(), r.denom()),
        }
    }
}

impl FromStr for Frequency {
    type Err = LabelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (freq, end) = parse_frequency_at(s, 0)?;
        if end != s.len() {
            return Err(LabelParseError::new(end, "trailing characters after frequency"));
        }
        Ok(freq)
    }
}

impl Serialize for Frequency {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Frequency {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_puts_infinity_on_top() {
        let half = Frequency::new(1, 2).unwrap();
        let one = Frequency::integer(1);
        assert!(Frequency::ZERO < half);
        assert!(half < one);
        assert!(one < Frequency::Infinity);
        assert_eq!(Frequency::new(2, 4), Frequency::new(1, 2));
    }

    #[test]
    fn text_forms() {
        assert_eq!(Frequency::new(2, 10).unwrap().to_string(), "1/5");
        assert_eq!(Frequency::integer(3).to_string(), "3");
        assert_eq!(Frequency::ZERO.to_string(), "0");
        assert_eq!("inf".parse::<Frequency>().unwrap(), Frequency::Infinity);
        assert_eq!("1/5".parse::<Frequency>().unwrap(), Frequency::new(1, 5).unwrap());
        assert!("2/10".parse::<Frequency>().is_err());
        assert!("3/1".parse::<Frequency>().is_err());
        assert!("1/0".parse::<Frequency>().is_err());
        assert!("07".parse::<Frequency>().is_err());
    }

    #[test]
    fn unit_period() {
        assert_eq!(Frequency::new(1, 5).unwrap().unit_period(), Some(5));
        assert_eq!(Frequency::new(2, 5).unwrap().unit_period(), None);
        assert_eq!(Frequency::Infinity.unit_period(), None);
        assert_eq!(Frequency::new(0, 1), Some(Frequency::ZERO));
    }
}
