use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use num_rational::Ratio;
use num_traits::{FromPrimitive, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::money::Money;

/// Exact rational number, kept in lowest terms with a positive denominator.
/// Candidate prices derived as bid * eps_k / eps_m must compare exactly, so
/// everything price-related flows through this type until report emission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactRational(Ratio<i128>);

impl ExactRational {
    pub fn new(numerator: i128, denominator: i128) -> Self {
        assert!(denominator != 0, "zero denominator");
        ExactRational(Ratio::new(numerator, denominator))
    }

    pub fn from_integer(n: i128) -> Self {
        ExactRational(Ratio::from_integer(n))
    }

    pub fn zero() -> Self {
        ExactRational(Ratio::zero())
    }

    /// Exact conversion: every finite f64 is a rational.
    pub fn from_f64_exact(x: f64) -> Self {
        ExactRational(Ratio::from_f64(x).expect("non-finite value"))
    }

    pub fn from_money(m: Money) -> Self {
        ExactRational(Ratio::from_integer(m.minor() as i128))
    }

    pub fn numerator(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denominator(&self) -> i128 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap()
    }

    /// Round toward zero to minor units. Callers guarantee non-negative.
    pub fn floor_to_money(&self) -> Money {
        assert!(!self.is_negative(), "negative amount");
        Money::from_minor(self.0.floor().to_integer() as u64)
    }

    /// Round half-up to minor units. Callers guarantee non-negative.
    pub fn round_half_up_to_money(&self) -> Money {
        assert!(!self.is_negative(), "negative amount");
        let doubled = self.0 * Ratio::from_integer(2) + Ratio::from_integer(1);
        Money::from_minor((doubled.floor().to_integer() / 2) as u64)
    }
}

impl Add for ExactRational {
    type Output = ExactRational;
    fn add(self, rhs: Self) -> Self {
        ExactRational(self.0 + rhs.0)
    }
}

impl Sub for ExactRational {
    type Output = ExactRational;
    fn sub(self, rhs: Self) -> Self {
        ExactRational(self.0 - rhs.0)
    }
}

impl Mul for ExactRational {
    type Output = ExactRational;
    fn mul(self, rhs: Self) -> Self {
        ExactRational(self.0 * rhs.0)
    }
}

impl Div for ExactRational {
    type Output = ExactRational;
    fn div(self, rhs: Self) -> Self {
        assert!(!rhs.is_zero(), "division by zero");
        ExactRational(self.0 / rhs.0)
    }
}

impl fmt::Display for ExactRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self.0.denom() == 1 {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl Serialize for ExactRational {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        (self.numerator(), self.denominator()).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ExactRational {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (n, d): (i128, i128) = Deserialize::deserialize(deserializer)?;
        if d <= 0 {
            return Err(serde::de::Error::custom("denominator must be positive"));
        }
        Ok(ExactRational::new(n, d))
    }
}

pub fn cmp_exact(a: &ExactRational, b: &ExactRational) -> Ordering {
    a.cmp(b)
}
