//! Arbitrary-precision integers with an inline fast path for values that fit
//! in an `i64`.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

#[derive(Clone, Debug)]
pub enum Integer {
    Small(i64),
    Big(Arc<BigInt>),
}

impl Integer {
    pub const ZERO: Integer = Integer::Small(0);

    fn from_big(b: BigInt) -> Integer {
        match b.to_i64() {
            Some(n) => Integer::Small(n),
            None => Integer::Big(Arc::new(b)),
        }
    }

    fn to_big(&self) -> BigInt {
        match self {
            Integer::Small(n) => BigInt::from(*n),
            Integer::Big(b) => (**b).clone(),
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Integer::Small(n) => Some(*n),
            Integer::Big(_) => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Integer::Small(0))
    }

    pub fn is_negative(&self) -> bool {
        match self {
            Integer::Small(n) => *n < 0,
            Integer::Big(b) => b.is_negative(),
        }
    }

    pub fn is_natural(&self) -> bool {
        !self.is_negative()
    }

    pub fn add(&self, other: &Integer) -> Integer {
        if let (Integer::Small(a), Integer::Small(b)) = (self, other) {
            if let Some(c) = a.checked_add(*b) {
                return Integer::Small(c);
            }
        }
        Integer::from_big(self.to_big() + other.to_big())
    }

    pub fn sub(&self, other: &Integer) -> Integer {
        if let (Integer::Small(a), Integer::Small(b)) = (self, other) {
            if let Some(c) = a.checked_sub(*b) {
                return Integer::Small(c);
            }
        }
        Integer::from_big(self.to_big() - other.to_big())
    }

    pub fn mul(&self, other: &Integer) -> Integer {
        if let (Integer::Small(a), Integer::Small(b)) = (self, other) {
            if let Some(c) = a.checked_mul(*b) {
                return Integer::Small(c);
            }
        }
        Integer::from_big(self.to_big() * other.to_big())
    }

    pub fn neg(&self) -> Integer {
        Integer::ZERO.sub(self)
    }

    /// Parses an optionally signed decimal literal.
    pub fn parse(text: &str) -> Option<Integer> {
        let digits = text.strip_prefix(['+', '-']).unwrap_or(text);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let text = text.strip_prefix('+').unwrap_or(text);
        match text.parse::<i64>() {
            Ok(n) => Some(Integer::Small(n)),
            Err(_) => text.parse::<BigInt>().ok().map(Integer::from_big),
        }
    }
}

impl From<i64> for Integer {
    fn from(n: i64) -> Self {
        Integer::Small(n)
    }
}

impl From<i32> for Integer {
    fn from(n: i32) -> Self {
        Integer::Small(n.into())
    }
}

impl From<usize> for Integer {
    fn from(n: usize) -> Self {
        match i64::try_from(n) {
            Ok(n) => Integer::Small(n),
            Err(_) => Integer::from_big(BigInt::from(n)),
        }
    }
}

impl PartialEq for Integer {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Integer {}

impl PartialOrd for Integer {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Integer {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Integer::Small(a), Integer::Small(b)) => a.cmp(b),
            _ => self.to_big().cmp(&other.to_big()),
        }
    }
}

impl fmt::Display for Integer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Integer::Small(n) => write!(f, "{n}"),
            Integer::Big(b) => {
                if b.is_zero() {
                    write!(f, "0")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overflow_promotes_and_demotes() {
        let max = Integer::from(i64::MAX);
        let big = max.add(&Integer::from(1));
        assert!(matches!(big, Integer::Big(_)));
        assert_eq!(big.to_string(), "9223372036854775808");
        let back = big.sub(&Integer::from(1));
        assert!(matches!(back, Integer::Small(i64::MAX)));
    }

    #[test]
    fn parse_literals() {
        assert_eq!(Integer::parse("-17"), Some(Integer::from(-17)));
        assert_eq!(Integer::parse("+4"), Some(Integer::from(4)));
        assert_eq!(Integer::parse("1/2"), None);
        assert_eq!(Integer::parse("-"), None);
        let huge = Integer::parse("123456789012345678901234567890").unwrap();
        assert_eq!(huge.to_string(), "123456789012345678901234567890");
        assert!(huge > Integer::from(i64::MAX));
    }
}
