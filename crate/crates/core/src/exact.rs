//! Exact rational arithmetic for cost terms.
//!
//! Supplies and demands are integral RRU amounts and the spread fractions are
//! small rationals (1/15, 1/75), so every cost term is a rational number. Keeping
//! them exact makes per-type decomposition checks bit-for-bit.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type Exact = Ratio<i128>;

pub fn exact_to_f64(x: &Exact) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub fn exact_int(v: i128) -> Exact {
    Exact::from_integer(v)
}

/// A configuration-level rational such as `1/15` or `0.5`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Frac(Ratio<i64>);

impl Frac {
    pub fn new(numer: i64, denom: i64) -> Self {
        Frac(Ratio::new(numer, denom))
    }

    pub fn integer(v: i64) -> Self {
        Frac(Ratio::from_integer(v))
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }

    pub fn exact(&self) -> Exact {
        Exact::new(self.numer() as i128, self.denom() as i128)
    }

    pub fn to_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl fmt::Debug for Frac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Frac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl FromStr for Frac {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || format!("`{s}` is not a rational (expected `n`, `n/d` or a decimal)");
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(format!("`{s}` has a zero denominator"));
            }
            return Ok(Frac::new(n, d));
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 15 {
                return Err(bad());
            }
            let neg = int.starts_with('-');
            let int_part: i64 = if int.is_empty() || int == "-" {
                0
            } else {
                int.parse().map_err(|_| bad())?
            };
            let denom = 10i64.pow(frac.len() as u32);
            let frac_part: i64 = frac.parse().map_err(|_| bad())?;
            let magnitude = int_part.abs() * denom + frac_part;
            let numer = if neg { -magnitude } else { magnitude };
            return Ok(Frac::new(numer, denom));
        }
        s.parse::<i64>().map(Frac::integer).map_err(|_| bad())
    }
}

impl Serialize for Frac {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Frac {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct FracVisitor;

        impl Visitor<'_> for FracVisitor {
            type Value = Frac;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a rational number as integer, decimal or \"n/d\" string")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Frac, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Frac, E> {
                Ok(Frac::integer(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Frac, E> {
                i64::try_from(v).map(Frac::integer).map_err(E::custom)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Frac, E> {
                format!("{v:?}").parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(FracVisitor)
    }
}
