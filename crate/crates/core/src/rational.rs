//! Exact rational arithmetic used throughout the crate.
//!
//! All schedule state (budgets, rates, curve parameters) is kept as
//! arbitrary-precision rationals so that conformance verdicts are exact.
//! Times stay integer microticks and only become rational when multiplied
//! by a rate.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};

pub type Rat = num_rational::BigRational;

/// `n / d` as a reduced rational. Panics if `d == 0`.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Integer `n` as a rational.
pub fn rint(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Tick count `t` as a rational.
pub fn rtick(t: u64) -> Rat {
    Rat::from_integer(BigInt::from(t))
}

/// Largest multiple of `step` that is `<= x`, i.e. `floor(x / step) * step`.
/// `step` must be positive.
pub fn floor_to_multiple(x: &Rat, step: &Rat) -> Rat {
    assert!(step.is_positive(), "floor_to_multiple needs step > 0");
    (x / step).floor() * step
}

/// Lossy conversion for reporting only; never feeds back into decisions.
pub fn to_f64(x: &Rat) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Percentage with one decimal, e.g. 2/9 -> "22.2". Rounds half up, exactly.
pub fn percent_one_decimal(x: &Rat) -> String {
    let scaled = x * rint(1000) + rat(1, 2);
    let tenths = scaled.floor().to_integer();
    let whole = &tenths / BigInt::from(10);
    let frac = (&tenths % BigInt::from(10)).abs();
    format!("{whole}.{frac}")
}

/// Serde adapter storing a rational as a `[numerator, denominator]` pair of
/// JSON integers. Values outside i64 range are rejected rather than rounded.
pub mod serde_pair {
    use super::Rat;
    use num_bigint::BigInt;
    use num_traits::ToPrimitive;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(x: &Rat, s: S) -> Result<S::Ok, S::Error> {
        let n = x.numer().to_i64().ok_or_else(|| {
            serde::ser::Error::custom("rational numerator exceeds i64 range")
        })?;
        let d = x.denom().to_i64().ok_or_else(|| {
            serde::ser::Error::custom("rational denominator exceeds i64 range")
        })?;
        [n, d].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rat, D::Error> {
        let [n, den] = <[i64; 2]>::deserialize(d)?;
        if den == 0 {
            return Err(serde::de::Error::custom("rational with zero denominator"));
        }
        Ok(Rat::new(BigInt::from(n), BigInt::from(den)))
    }
}

/// Optional-rational variant of [`serde_pair`].
pub mod serde_pair_opt {
    use super::Rat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "super::serde_pair")] Rat);

    pub fn serialize<S: Serializer>(x: &Option<Rat>, s: S) -> Result<S::Ok, S::Error> {
        x.clone().map(Wrap).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rat>, D::Error> {
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduces_to_canonical_form() {
        assert_eq!(rat(2, 4), rat(1, 2));
        assert_eq!(rat(-2, -4), rat(1, 2));
        assert_eq!(rat(2, -4), rat(-1, 2));
        assert!(rat(2, -4).denom() > &num_bigint::BigInt::from(0));
    }

    #[test]
    fn floor_to_multiple_snaps_down() {
        assert_eq!(floor_to_multiple(&rat(7, 8), &rat(1, 4)), rat(3, 4));
        assert_eq!(floor_to_multiple(&rat(3, 4), &rat(1, 4)), rat(3, 4));
        assert_eq!(floor_to_multiple(&rat(1, 5), &rat(1, 4)), rint(0));
    }

    #[test]
    fn percent_rounds_half_up_at_one_decimal() {
        assert_eq!(percent_one_decimal(&rat(2, 9)), "22.2");
        assert_eq!(percent_one_decimal(&rat(10, 49)), "20.4");
        assert_eq!(percent_one_decimal(&rat(2, 11)), "18.2");
        assert_eq!(percent_one_decimal(&rat(12, 51)), "23.5");
        assert_eq!(percent_one_decimal(&rat(1, 2)), "50.0");
    }

    #[test]
    fn serde_pair_round_trips() {
        #[derive(serde::Serialize, serde::Deserialize)]
        struct S(#[serde(with = "serde_pair")] Rat);
        let s = serde_json::to_string(&S(rat(2, 3))).unwrap();
        assert_eq!(s, "[2,3]");
        let back: S = serde_json::from_str(&s).unwrap();
        assert_eq!(back.0, rat(2, 3));
    }
}
