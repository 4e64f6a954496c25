use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::MetricError;

/// A metric value or the reason it is undefined.
pub type Measured = Result<f64, MetricError>;

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Repr {
    Value(f64),
    Undefined { undefined: MetricError },
}

/// Serialises a [`Measured`] as a bare number or `{"undefined": {...}}`.
pub(crate) fn serialize<S: Serializer>(m: &Measured, s: S) -> Result<S::Ok, S::Error> {
    match m {
        Ok(v) => Repr::Value(*v),
        Err(e) => Repr::Undefined {
            undefined: e.clone(),
        },
    }
    .serialize(s)
}

pub(crate) fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Measured, D::Error> {
    Ok(match Repr::deserialize(d)? {
        Repr::Value(v) => Ok(v),
        Repr::Undefined { undefined } => Err(undefined),
    })
}
