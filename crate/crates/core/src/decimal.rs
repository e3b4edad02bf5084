//! Decimal numbers that remember the text they were read from.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scalar::{ParseDecimalError, Scalar};

/// A finite real stored alongside its decimal source text.
///
/// Spec files carry every rate and probability as a string; keeping the
/// original text lets a file round-trip byte-for-byte and lets the exact
/// analysis re-read the value as a rational instead of a rounded double.
#[derive(Clone, PartialEq)]
pub struct Decimal {
    text: String,
    value: f64,
}

impl Decimal {
    pub fn parse(text: &str) -> Result<Self, ParseDecimalError> {
        let value = f64::parse_decimal(text)?;
        Ok(Self {
            text: text.trim().to_string(),
            value,
        })
    }

    /// Uses the shortest representation that reads back to the same double.
    pub fn from_f64(value: f64) -> Self {
        assert!(value.is_finite(), "decimal must be finite");
        Self {
            text: format!("{value}"),
            value,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn to_scalar<T: Scalar>(&self) -> T {
        T::parse_decimal(&self.text).expect("decimal text was validated at construction")
    }
}

impl fmt::Debug for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.text)
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl From<f64> for Decimal {
    fn from(value: f64) -> Self {
        Self::from_f64(value)
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(serde_json::Number),
        }
        let text = match Raw::deserialize(deserializer)? {
            Raw::Text(t) => t,
            Raw::Number(n) => n.to_string(),
        };
        Decimal::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Formats a double as a decimal string for JSON reports.
pub fn dec(value: f64) -> String {
    if value.is_finite() {
        format!("{value}")
    } else if value.is_nan() {
        "NaN".to_string()
    } else if value > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_source_text() {
        let d: Decimal = serde_json::from_str("\"0.50\"").unwrap();
        assert_eq!(d.value(), 0.5);
        assert_eq!(serde_json::to_string(&d).unwrap(), "\"0.50\"");
    }

    #[test]
    fn accepts_bare_numbers() {
        let d: Decimal = serde_json::from_str("1.25").unwrap();
        assert_eq!(d.value(), 1.25);
    }

    #[test]
    fn shortest_repr_reads_back() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 123456.789] {
            let d = Decimal::from_f64(v);
            assert_eq!(Decimal::parse(d.text()).unwrap().value(), v);
        }
    }
}
