//! Serde adapters: rationals as `[numerator, denominator]` JSON integer pairs
//! (arbitrary size), floats as decimal strings with a precision tag.

use std::str::FromStr;

use rug::{Float, Integer, Rational};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Number;

use crate::scalar::{format_float, parse_float, Precision, Scalar};

pub const SCHEMA_VERSION: u32 = 1;

fn integer_number<E: serde::ser::Error>(i: &Integer) -> Result<Number, E> {
    Number::from_str(&i.to_string()).map_err(E::custom)
}

fn number_integer<E: serde::de::Error>(n: &Number) -> Result<Integer, E> {
    Integer::from_str(&n.to_string()).map_err(|_| E::custom(format!("{n} is not an integer")))
}

struct PairRef<'a>(&'a Rational);

impl Serialize for PairRef<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let n = integer_number::<S::Error>(self.0.numer())?;
        let d = integer_number::<S::Error>(self.0.denom())?;
        (n, d).serialize(s)
    }
}

#[derive(Deserialize)]
struct PairOwned(Number, Number);

impl PairOwned {
    fn into_rational<E: serde::de::Error>(self) -> Result<Rational, E> {
        let n = number_integer::<E>(&self.0)?;
        let d = number_integer::<E>(&self.1)?;
        if d == 0 {
            return Err(E::custom("zero denominator"));
        }
        Ok(Rational::from((n, d)))
    }
}

pub mod rational {
    use super::*;

    pub fn serialize<S: Serializer>(q: &Rational, s: S) -> Result<S::Ok, S::Error> {
        PairRef(q).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        PairOwned::deserialize(d)?.into_rational()
    }
}

pub mod rational_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(PairRef))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        Vec::<PairOwned>::deserialize(d)?
            .into_iter()
            .map(PairOwned::into_rational)
            .collect()
    }
}

pub mod rational_opt {
    use super::*;

    pub fn serialize<S: Serializer>(q: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match q {
            Some(q) => s.serialize_some(&PairRef(q)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        Option::<PairOwned>::deserialize(d)?
            .map(PairOwned::into_rational)
            .transpose()
    }
}

#[derive(Serialize, Deserialize)]
struct TaggedFloat {
    value: String,
    precision: u32,
}

pub mod float {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Float, s: S) -> Result<S::Ok, S::Error> {
        TaggedFloat {
            value: format_float(x),
            precision: x.prec(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Float, D::Error> {
        let t = TaggedFloat::deserialize(d)?;
        let prec = Precision::new(t.precision).map_err(D::Error::custom)?;
        parse_float(&t.value, prec).map_err(D::Error::custom)
    }
}

pub mod float_opt {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Option<Float>, s: S) -> Result<S::Ok, S::Error> {
        match x {
            Some(f) => s.serialize_some(&TaggedFloat {
                value: format_float(f),
                precision: f.prec(),
            }),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Float>, D::Error> {
        match Option::<TaggedFloat>::deserialize(d)? {
            None => Ok(None),
            Some(t) => {
                let prec = Precision::new(t.precision).map_err(D::Error::custom)?;
                parse_float(&t.value, prec).map(Some).map_err(D::Error::custom)
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ScalarRepr {
    Exact(PairOwnedSer),
    Approx(TaggedFloat),
}

// Owned mirror of `PairRef` so the enum can derive both directions.
#[derive(Serialize, Deserialize)]
struct PairOwnedSer(Number, Number);

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let repr = match self {
            Scalar::Exact(q) => ScalarRepr::Exact(PairOwnedSer(
                integer_number::<S::Error>(q.numer())?,
                integer_number::<S::Error>(q.denom())?,
            )),
            Scalar::Approx(f) => ScalarRepr::Approx(TaggedFloat {
                value: format_float(f),
                precision: f.prec(),
            }),
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match ScalarRepr::deserialize(d)? {
            ScalarRepr::Exact(PairOwnedSer(n, den)) => {
                Ok(Scalar::Exact(PairOwned(n, den).into_rational()?))
            }
            ScalarRepr::Approx(t) => {
                let prec = Precision::new(t.precision).map_err(D::Error::custom)?;
                Ok(Scalar::Approx(
                    parse_float(&t.value, prec).map_err(D::Error::custom)?,
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Holder {
        #[serde(with = "rational")]
        q: Rational,
        #[serde(with = "rational_vec")]
        v: Vec<Rational>,
    }

    #[test]
    fn rationals_are_integer_pairs() {
        let big = Rational::from((Integer::from(1) << 100u32, Integer::from(3)));
        let h = Holder {
            q: Rational::from((-5, 16)),
            v: vec![big.clone(), Rational::from(0)],
        };
        let text = serde_json::to_string(&h).unwrap();
        assert_eq!(
            text,
            r#"{"q":[-5,16],"v":[[1267650600228229401496703205376,3],[0,1]]}"#
        );
        let back: Holder = serde_json::from_str(&text).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn scalar_round_trip() {
        let p = Precision::default();
        for s in [Scalar::exact((3, 7)), Scalar::Approx(p.float(3).sqrt())] {
            let text = serde_json::to_string(&s).unwrap();
            let back: Scalar = serde_json::from_str(&text).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn zero_denominator_rejected() {
        let r: Result<Holder, _> = serde_json::from_str(r#"{"q":[1,0],"v":[]}"#);
        assert!(r.is_err());
    }
}
