//! Integer quantities used throughout the fee machinery.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};
use std::str::FromStr;

/// Exact wei amount. `u128` leaves ample headroom for cumulative fee
/// series even at the 10^15 wei/blob-gas congestion scale.
///
/// Serialized as a decimal string: JSON numbers cannot carry u128 without
/// loss, and buffered deserialization (tagged enums) rejects u128 outright.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Wei(pub u128);

impl Serialize for Wei {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for Wei {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct WeiVisitor;
        impl serde::de::Visitor<'_> for WeiVisitor {
            type Value = Wei;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a wei amount as a decimal string or integer")
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<Wei, E> {
                v.parse().map(Wei).map_err(E::custom)
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<Wei, E> {
                Ok(Wei(v as u128))
            }
            fn visit_u128<E: serde::de::Error>(self, v: u128) -> Result<Wei, E> {
                Ok(Wei(v))
            }
        }
        deserializer.deserialize_any(WeiVisitor)
    }
}

impl Wei {
    pub const ZERO: Wei = Wei(0);

    pub fn gwei(n: u128) -> Wei {
        Wei(n * 1_000_000_000)
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Exact scaling by a unitless factor (gas, blob count, ...).
    pub fn times(self, factor: u128) -> Wei {
        Wei(self.0.checked_mul(factor).expect("wei overflow"))
    }

    pub fn saturating_sub(self, rhs: Wei) -> Wei {
        Wei(self.0.saturating_sub(rhs.0))
    }
}

impl Add for Wei {
    type Output = Wei;
    fn add(self, rhs: Wei) -> Wei {
        Wei(self.0.checked_add(rhs.0).expect("wei overflow"))
    }
}

impl AddAssign for Wei {
    fn add_assign(&mut self, rhs: Wei) {
        *self = *self + rhs;
    }
}

impl Sub for Wei {
    type Output = Wei;
    fn sub(self, rhs: Wei) -> Wei {
        Wei(self.0.checked_sub(rhs.0).expect("wei underflow"))
    }
}

impl Sum for Wei {
    fn sum<I: Iterator<Item = Wei>>(iter: I) -> Wei {
        iter.fold(Wei::ZERO, |acc, w| acc + w)
    }
}

impl fmt::Display for Wei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for Wei {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Wei(s.parse()?))
    }
}

impl From<u128> for Wei {
    fn from(v: u128) -> Wei {
        Wei(v)
    }
}

/// Blob gas, the consumption unit of the EIP-4844 market.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlobGas(pub u64);

impl BlobGas {
    pub const ZERO: BlobGas = BlobGas(0);
}

impl Add for BlobGas {
    type Output = BlobGas;
    fn add(self, rhs: BlobGas) -> BlobGas {
        BlobGas(self.0.checked_add(rhs.0).expect("blob gas overflow"))
    }
}

impl BlobGas {
    pub fn saturating_sub(self, rhs: BlobGas) -> BlobGas {
        BlobGas(self.0.saturating_sub(rhs.0))
    }
}

impl fmt::Display for BlobGas {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}
