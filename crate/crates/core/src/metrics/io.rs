use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize};

use super::{MetricError, Result};
use crate::bench::BenchRecord;

/// Item ids may be JSON strings or integers; both compare as strings.
fn id_string<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        S(String),
        N(u64),
    }
    Ok(match Id::deserialize(d)? {
        Id::S(s) => s,
        Id::N(n) => n.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRow {
    #[serde(deserialize_with = "id_string")]
    pub id: String,
    pub prediction: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceRow {
    #[serde(deserialize_with = "id_string")]
    pub id: String,
    pub reference: String,
}

/// A reference line: either `{id, reference}` or a benchmark record, whose
/// `output` is the reference and whose id is its 0-based position.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ReferenceInput {
    Keyed(ReferenceRow),
    Record(BenchRecord),
}

pub fn reference_rows(inputs: Vec<ReferenceInput>) -> Vec<ReferenceRow> {
    inputs
        .into_iter()
        .enumerate()
        .map(|(i, r)| match r {
            ReferenceInput::Keyed(k) => k,
            ReferenceInput::Record(rec) => ReferenceRow { id: i.to_string(), reference: rec.output },
        })
        .collect()
}

/// Joins predictions to references by id, in reference order. Every
/// reference needs exactly one prediction and vice versa.
pub fn pair_by_id(predictions: &[PredictionRow], references: &[ReferenceRow]) -> Result<Vec<(String, String)>> {
    let mut by_id: HashMap<&str, &str> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(&p.id, &p.prediction).is_some() {
            return Err(MetricError::Pairing(format!("duplicate prediction id `{}`", p.id)));
        }
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(references.len());
    for r in references {
        if !seen.insert(r.id.as_str()) {
            return Err(MetricError::Pairing(format!("duplicate reference id `{}`", r.id)));
        }
        let p = by_id.get(r.id.as_str()).ok_or_else(|| MetricError::Pairing(format!("no prediction for id `{}`", r.id)))?;
        out.push((p.to_string(), r.reference.clone()));
    }
    if let Some(extra) = predictions.iter().find(|p| !seen.contains(p.id.as_str())) {
        return Err(MetricError::Pairing(format!("prediction id `{}` has no reference", extra.id)));
    }
    Ok(out)
}
