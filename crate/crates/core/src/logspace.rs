//! Log-space arithmetic and extended-real serialization.

pub const NEG_INF: f64 = f64::NEG_INFINITY;

/// `log Σ exp(x)`; returns `-inf` for an empty or all-`-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(NEG_INF, f64::max);
    if max == NEG_INF {
        return NEG_INF;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

pub fn log_add(a: f64, b: f64) -> f64 {
    if a == NEG_INF {
        return b;
    }
    if b == NEG_INF {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln p` with `ln 0 = -inf`.
pub fn ln(p: f64) -> f64 {
    if p <= 0.0 {
        NEG_INF
    } else {
        p.ln()
    }
}

/// Adds `delta` to a log weight, keeping `-inf` absorbing so that
/// `-inf - (-inf)` never turns into NaN.
pub fn accumulate(weight: f64, delta: f64) -> f64 {
    if weight == NEG_INF || delta == NEG_INF || delta.is_nan() {
        NEG_INF
    } else {
        weight + delta
    }
}

/// Neumaier-compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Serde adapter writing non-finite floats as `"-inf"`, `"inf"` or `"nan"`
/// (JSON has no literal for them). Finite values stay numbers; on input
/// both forms are accepted.
pub mod ext_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => parse(&t).ok_or_else(|| serde::de::Error::custom(format!("bad float {t:?}"))),
        }
    }

    pub fn parse(t: &str) -> Option<f64> {
        match t.trim() {
            "-inf" | "-Infinity" => Some(f64::NEG_INFINITY),
            "inf" | "Infinity" => Some(f64::INFINITY),
            "nan" | "NaN" => Some(f64::NAN),
            other => other.parse().ok(),
        }
    }

    pub mod option {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match x {
                Some(v) => super::serialize(v, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            #[derive(Deserialize)]
            struct Wrap(#[serde(with = "super")] f64);
            Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
        }
    }

    pub mod vec {
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        #[derive(Serialize, Deserialize)]
        struct Wrap(#[serde(with = "super")] f64);

        pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(xs.len()))?;
            for &x in xs {
                seq.serialize_element(&Wrap(x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Wrap>::deserialize(d)?.into_iter().map(|w| w.0).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_basics() {
        assert_eq!(log_sum_exp(&[]), NEG_INF);
        assert_eq!(log_sum_exp(&[NEG_INF, NEG_INF]), NEG_INF);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_add(0.5f64.ln(), 0.25f64.ln()) - 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn accumulate_absorbs() {
        assert_eq!(accumulate(NEG_INF, 3.0), NEG_INF);
        assert_eq!(accumulate(1.0, NEG_INF), NEG_INF);
        assert_eq!(accumulate(1.0, NEG_INF - NEG_INF), NEG_INF);
        assert_eq!(accumulate(1.0, 2.0), 3.0);
    }

    #[test]
    fn compensated() {
        let s: CompensatedSum = [1e16, 1.0, -1e16].into_iter().collect();
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn ext_f64_round_trip() {
        #[derive(serde::Serialize, serde::Deserialize)]
        struct W(#[serde(with = "ext_f64")] f64);
        assert_eq!(serde_json::to_string(&W(NEG_INF)).unwrap(), "\"-inf\"");
        assert_eq!(serde_json::to_string(&W(0.5)).unwrap(), "0.5");
        assert_eq!(serde_json::from_str::<W>("\"-inf\"").unwrap().0, NEG_INF);
        assert_eq!(serde_json::from_str::<W>("\"-1.5\"").unwrap().0, -1.5);
        assert_eq!(serde_json::from_str::<W>("2").unwrap().0, 2.0);
    }
}
