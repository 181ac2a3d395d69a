use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::StateError;

/// A hyperparameter value: a bounded scalar or one of a fixed set of names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Choice(String),
}

impl ParamValue {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            ParamValue::Scalar(v) => Some(*v),
            ParamValue::Choice(_) => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Scalar(v) => write!(f, "{v}"),
            ParamValue::Choice(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamSpec {
    Scalar { min: f64, max: f64, default: f64 },
    Choice { options: Vec<String>, default: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDef {
    pub key: String,
    #[serde(flatten)]
    pub spec: ParamSpec,
    #[serde(default)]
    pub doc: String,
}

impl ParamDef {
    pub fn default_value(&self) -> ParamValue {
        match &self.spec {
            ParamSpec::Scalar { default, .. } => ParamValue::Scalar(*default),
            ParamSpec::Choice { default, .. } => ParamValue::Choice(default.clone()),
        }
    }

    /// `Err` carries a human-readable reason.
    pub fn check(&self, value: &ParamValue) -> Result<(), String> {
        match (&self.spec, value) {
            (ParamSpec::Scalar { min, max, .. }, ParamValue::Scalar(v)) => {
                if v.is_finite() && *v >= *min && *v <= *max {
                    Ok(())
                } else {
                    Err(format!("value {v} outside [{min}, {max}]"))
                }
            }
            (ParamSpec::Choice { options, .. }, ParamValue::Choice(s)) => {
                if options.iter().any(|o| o == s) {
                    Ok(())
                } else {
                    Err(format!("value {s:?} not one of {options:?}"))
                }
            }
            (ParamSpec::Scalar { .. }, ParamValue::Choice(_)) => Err("expected a number".into()),
            (ParamSpec::Choice { .. }, ParamValue::Scalar(_)) => Err("expected one of the named options".into()),
        }
    }
}

#[derive(Debug, Deserialize)]
struct RegistryFile {
    params: Vec<ParamDef>,
}

/// The set of hyperparameter keys a state may assign, with their ranges.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamRegistry {
    defs: BTreeMap<String, ParamDef>,
}

const CANONICAL: &str = include_str!("../../data/registry.json");

impl ParamRegistry {
    /// The shipped keys: body, heart, hands, thread and global families.
    pub fn canonical() -> Self {
        let mut reg = Self::default();
        reg.extend_from_json(CANONICAL.as_bytes())
            .expect("bundled registry is valid");
        reg
    }

    /// Adds (or redefines) entries from a `{"params": [...]}` document.
    pub fn extend_from_json(&mut self, doc: &[u8]) -> Result<(), StateError> {
        let file: RegistryFile =
            serde_json::from_slice(doc).map_err(|e| StateError::Registry(e.to_string()))?;
        for def in file.params {
            if def.key.split('.').count() < 2 || def.key.split('.').any(str::is_empty) {
                return Err(StateError::Registry(format!("key {:?} is not a dotted name", def.key)));
            }
            match &def.spec {
                ParamSpec::Scalar { min, max, default } => {
                    if !(min <= default && default <= max) {
                        return Err(StateError::Registry(format!("{}: default outside range", def.key)));
                    }
                }
                ParamSpec::Choice { options, default } => {
                    if !options.contains(default) {
                        return Err(StateError::Registry(format!("{}: default not an option", def.key)));
                    }
                }
            }
            self.defs.insert(def.key.clone(), def);
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&ParamDef> {
        self.defs.get(key)
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn defs(&self) -> impl Iterator<Item = &ParamDef> {
        self.defs.values()
    }

    pub fn check(&self, key: &str, value: &ParamValue) -> Result<(), StateError> {
        let def = self
            .get(key)
            .ok_or_else(|| StateError::UnregisteredParameter(key.to_string()))?;
        def.check(value).map_err(|reason| StateError::OutOfRange { key: key.to_string(), reason })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_registry_covers_named_families() {
        let reg = ParamRegistry::canonical();
        assert!(reg.len() >= 18 && reg.len() <= 24, "{}", reg.len());
        for key in ["body.density", "body.latency", "body.distribution", "heart.light_size", "thread.render_mode", "global.light_level"] {
            assert!(reg.get(key).is_some(), "{key}");
        }
        for def in reg.defs() {
            assert!(def.check(&def.default_value()).is_ok());
        }
    }

    #[test]
    fn extension_and_rejection() {
        let mut reg = ParamRegistry::canonical();
        let before = reg.len();
        reg.extend_from_json(br#"{"params":[{"key":"body.shimmer","kind":"scalar","min":0,"max":2,"default":1}]}"#)
            .unwrap();
        assert_eq!(reg.len(), before + 1);
        assert!(reg.check("body.shimmer", &ParamValue::Scalar(1.5)).is_ok());
        assert!(matches!(reg.check("body.shimmer", &ParamValue::Scalar(3.0)), Err(StateError::OutOfRange { .. })));
        assert!(reg
            .extend_from_json(br#"{"params":[{"key":"nodots","kind":"scalar","min":0,"max":1,"default":0}]}"#)
            .is_err());
        assert!(matches!(
            reg.check("thread.render_mode", &ParamValue::Choice("wire".into())),
            Err(StateError::OutOfRange { .. })
        ));
    }
}
