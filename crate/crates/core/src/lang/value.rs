//! Unbounded integers with an `i64` fast path.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};

#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Int {
    Small(i64),
    Big(Box<BigInt>),
}

impl Int {
    pub fn zero() -> Int {
        Int::Small(0)
    }

    fn big(&self) -> BigInt {
        match self {
            Int::Small(v) => BigInt::from(*v),
            Int::Big(b) => (**b).clone(),
        }
    }

    fn from_big(b: BigInt) -> Int {
        match b.to_i64() {
            Some(v) => Int::Small(v),
            None => Int::Big(Box::new(b)),
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Int::Small(v) => Some(*v),
            Int::Big(_) => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Int::Small(0))
    }

    pub fn add(&self, o: &Int) -> Int {
        if let (Int::Small(a), Int::Small(b)) = (self, o) {
            if let Some(v) = a.checked_add(*b) {
                return Int::Small(v);
            }
        }
        Int::from_big(self.big() + o.big())
    }

    pub fn sub(&self, o: &Int) -> Int {
        if let (Int::Small(a), Int::Small(b)) = (self, o) {
            if let Some(v) = a.checked_sub(*b) {
                return Int::Small(v);
            }
        }
        Int::from_big(self.big() - o.big())
    }

    pub fn mul(&self, o: &Int) -> Int {
        if let (Int::Small(a), Int::Small(b)) = (self, o) {
            if let Some(v) = a.checked_mul(*b) {
                return Int::Small(v);
            }
        }
        Int::from_big(self.big() * o.big())
    }

    /// Division truncating toward zero; `None` when `o` is zero.
    pub fn div(&self, o: &Int) -> Option<Int> {
        if o.is_zero() {
            return None;
        }
        if let (Int::Small(a), Int::Small(b)) = (self, o) {
            if let Some(v) = a.checked_div(*b) {
                return Some(Int::Small(v));
            }
        }
        // BigInt division truncates as well.
        Some(Int::from_big(self.big() / o.big()))
    }

    pub fn neg(&self) -> Int {
        match self {
            Int::Small(a) => match a.checked_neg() {
                Some(v) => Int::Small(v),
                None => Int::from_big(-self.big()),
            },
            Int::Big(b) => Int::from_big(-(**b).clone()),
        }
    }

    pub fn abs(&self) -> Int {
        match self {
            Int::Small(a) => match a.checked_abs() {
                Some(v) => Int::Small(v),
                None => Int::from_big(self.big().abs()),
            },
            Int::Big(b) => Int::from_big(b.abs()),
        }
    }
}

impl From<i64> for Int {
    fn from(v: i64) -> Int {
        Int::Small(v)
    }
}

impl From<BigInt> for Int {
    fn from(v: BigInt) -> Int {
        Int::from_big(v)
    }
}

impl Ord for Int {
    fn cmp(&self, o: &Int) -> Ordering {
        match (self, o) {
            (Int::Small(a), Int::Small(b)) => a.cmp(b),
            _ => self.big().cmp(&o.big()),
        }
    }
}

impl PartialOrd for Int {
    fn partial_cmp(&self, o: &Int) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl fmt::Debug for Int {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Int {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Int::Small(v) => write!(f, "{v}"),
            Int::Big(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Int(Int),
    Bool(bool),
}

impl Value {
    pub fn int(v: i64) -> Value {
        Value::Int(Int::Small(v))
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            Value::Int(_) => None,
        }
    }

    pub fn as_int(&self) -> Option<&Int> {
        match self {
            Value::Int(i) => Some(i),
            Value::Bool(_) => None,
        }
    }

    pub fn default_for(ty: crate::lang::ast::Type) -> Value {
        match ty {
            crate::lang::ast::Type::Bool => Value::Bool(false),
            _ => Value::int(0),
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl serde::Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Bool(b) => s.serialize_bool(*b),
            Value::Int(Int::Small(v)) => s.serialize_i64(*v),
            Value::Int(Int::Big(b)) => s.serialize_str(&b.to_string()),
        }
    }
}

impl<'de> serde::Deserialize<'de> for Value {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Value, D::Error> {
        use serde::de::Error;
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Bool(b) => Ok(Value::Bool(b)),
            serde_json::Value::Number(n) => n
                .as_i64()
                .map(Value::int)
                .ok_or_else(|| D::Error::custom(format!("integer {n} out of range"))),
            serde_json::Value::String(s) => s
                .parse::<BigInt>()
                .map(|b| Value::Int(Int::from(b)))
                .map_err(|_| D::Error::custom(format!("not an integer: {s}"))),
            other => Err(D::Error::custom(format!("expected int or bool, found {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn overflow_promotes() {
        let max = Int::Small(i64::MAX);
        let sum = max.add(&Int::Small(1));
        assert!(matches!(sum, Int::Big(_)));
        assert_eq!(sum.sub(&Int::Small(1)), Int::Small(i64::MAX));
        assert_eq!(Int::Small(i64::MIN).neg().neg(), Int::Small(i64::MIN));
    }

    #[test]
    fn division_truncates() {
        let d = |a: i64, b: i64| Int::Small(a).div(&Int::Small(b)).unwrap();
        assert_eq!(d(7, 2), Int::Small(3));
        assert_eq!(d(-7, 2), Int::Small(-3));
        assert_eq!(d(7, -2), Int::Small(-3));
        assert_eq!(d(-7, -2), Int::Small(3));
        assert!(Int::Small(1).div(&Int::zero()).is_none());
    }

    proptest! {
        #[test]
        fn agrees_with_bigint(a in any::<i64>(), b in any::<i64>()) {
            let (x, y) = (Int::Small(a), Int::Small(b));
            let (bx, by) = (BigInt::from(a), BigInt::from(b));
            prop_assert_eq!(x.add(&y), Int::from(&bx + &by));
            prop_assert_eq!(x.mul(&y), Int::from(&bx * &by));
            prop_assert_eq!(x.sub(&y), Int::from(&bx - &by));
            if b != 0 {
                prop_assert_eq!(x.div(&y).unwrap(), Int::from(&bx / &by));
            }
            prop_assert_eq!(x.cmp(&y), bx.cmp(&by));
        }
    }
}
