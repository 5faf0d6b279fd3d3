use std::fmt;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Serialize, Serializer};

/// Exact cardinality together with its natural logarithm.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Count {
    value: BigUint,
}

/// Natural log of a big integer; `-inf` for zero.
pub fn ln_biguint(v: &BigUint) -> f64 {
    if v.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = v.bits();
    if bits <= 64 {
        return (v.to_u64().unwrap() as f64).ln();
    }
    let shift = bits - 64;
    let top = (v >> shift).to_u64().unwrap();
    (top as f64).ln() + shift as f64 * std::f64::consts::LN_2
}

impl Count {
    pub fn new(value: BigUint) -> Self {
        Count { value }
    }

    pub fn zero() -> Self {
        Count::new(BigUint::zero())
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn into_value(self) -> BigUint {
        self.value
    }

    pub fn log_value(&self) -> f64 {
        ln_biguint(&self.value)
    }

    pub fn is_zero(&self) -> bool {
        self.value.is_zero()
    }
}

impl From<u64> for Count {
    fn from(v: u64) -> Self {
        Count::new(BigUint::from(v))
    }
}

impl From<BigUint> for Count {
    fn from(v: BigUint) -> Self {
        Count::new(v)
    }
}

impl fmt::Display for Count {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl Serialize for Count {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Count", 2)?;
        st.serialize_field("value", &self.value.to_string())?;
        let log = self.log_value();
        st.serialize_field("log", &if log.is_finite() { Some(log) } else { None })?;
        st.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Pow;

    #[test]
    fn zero_is_negative_infinity() {
        assert_eq!(Count::zero().log_value(), f64::NEG_INFINITY);
    }

    #[test]
    fn log_of_large_powers() {
        for n in [8u32, 16, 64, 100] {
            let v = BigUint::from(n).pow(n);
            let expected = n as f64 * (n as f64).ln();
            let got = Count::new(v).log_value();
            assert!(((got - expected) / expected).abs() < 1e-12, "{n}: {got} vs {expected}");
        }
    }

    #[test]
    fn log_of_small_values() {
        assert_eq!(Count::from(1).log_value(), 0.0);
        assert!((Count::from(9).log_value() - 9f64.ln()).abs() < 1e-15);
    }
}
