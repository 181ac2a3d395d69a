use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ParamRegistry, ParamValue, StateError};

pub const SEQUENCE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Preparation,
    Journey,
    Integration,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Preparation => "preparation",
            Phase::Journey => "journey",
            Phase::Integration => "integration",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AestheticState {
    pub name: String,
    /// Seconds.
    pub duration: f64,
    /// Seconds of linear blend from the previous state's values.
    #[serde(default)]
    pub crossfade: f64,
    pub params: BTreeMap<String, ParamValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSequence {
    pub version: u32,
    pub phase: Phase,
    pub states: Vec<AestheticState>,
}

impl StateSequence {
    pub fn total_duration(&self) -> f64 {
        self.states.iter().map(|s| s.duration).sum()
    }

    /// Canonical UTF-8 JSON, keys sorted, no whitespace.
    pub fn to_canonical_json(&self) -> Vec<u8> {
        crate::canonical::to_vec(self).expect("sequence serializes")
    }

    pub fn validate(&self, registry: &ParamRegistry) -> Result<(), StateError> {
        let schema = |path: String, message: String| StateError::Schema { path, message };
        if self.version != SEQUENCE_VERSION {
            return Err(StateError::VersionMismatch { found: self.version as i64, expected: SEQUENCE_VERSION });
        }
        if self.states.is_empty() {
            return Err(schema("states".into(), "a sequence needs at least one state".into()));
        }
        let mut names = HashSet::new();
        for (i, st) in self.states.iter().enumerate() {
            let at = |field: &str| format!("states[{i}].{field}");
            if st.name.is_empty() {
                return Err(schema(at("name"), "empty state name".into()));
            }
            if !names.insert(st.name.as_str()) {
                return Err(schema(at("name"), format!("duplicate state name {:?}", st.name)));
            }
            if !(st.duration > 0.0 && st.duration.is_finite()) {
                return Err(schema(
                    at("duration"),
                    format!("state {:?} has non-positive duration {}", st.name, st.duration),
                ));
            }
            if !(st.crossfade >= 0.0 && st.crossfade < st.duration) {
                return Err(schema(
                    at("crossfade"),
                    format!("state {:?}: crossfade must be in [0, duration)", st.name),
                ));
            }
            for (key, value) in &st.params {
                let path = format!("states[{i}].params.{key}");
                match registry.check(key, value) {
                    Ok(()) => {}
                    Err(StateError::UnregisteredParameter(k)) => {
                        return Err(schema(path, format!("unregistered parameter {k:?}")));
                    }
                    Err(StateError::OutOfRange { reason, .. }) => return Err(schema(path, reason)),
                    Err(other) => return Err(other),
                }
            }
        }
        Ok(())
    }
}

/// Parses and validates a sequence document against `registry`.
pub fn parse_sequence(document: &[u8], registry: &ParamRegistry) -> Result<StateSequence, StateError> {
    let text = std::str::from_utf8(document).map_err(|_| StateError::Encoding)?;
    let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| StateError::Json(e.to_string()))?;
    match raw.get("version") {
        None => {
            return Err(StateError::Schema { path: "version".into(), message: "missing field".into() });
        }
        Some(v) => match v.as_i64() {
            Some(found) if found != SEQUENCE_VERSION as i64 => {
                return Err(StateError::VersionMismatch { found, expected: SEQUENCE_VERSION });
            }
            Some(_) => {}
            None => {
                return Err(StateError::Schema { path: "version".into(), message: "expected an integer".into() });
            }
        },
    }
    let seq: StateSequence = serde_path_to_error::deserialize(raw).map_err(|e| StateError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    seq.validate(registry)?;
    Ok(seq)
}

const PREPARATION: &str = include_str!("../../data/sequences/preparation.json");
const JOURNEY: &str = include_str!("../../data/sequences/journey.json");
const INTEGRATION: &str = include_str!("../../data/sequences/integration.json");

/// The shipped three-phase script: preparation (7 states, 15 min), journey
/// (16 states, 25 min) and integration (1 state, 10 min). Parameter values
/// are placeholders.
pub fn reference_sequences() -> Vec<StateSequence> {
    let reg = ParamRegistry::canonical();
    [PREPARATION, JOURNEY, INTEGRATION]
        .iter()
        .map(|doc| parse_sequence(doc.as_bytes(), &reg).expect("bundled sequence is valid"))
        .collect()
}
