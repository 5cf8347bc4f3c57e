use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ExprError;

/// Reserved parameter standing for the eigenvalue of `H` inside
/// energy-dependent operator coefficients.
pub const ENERGY: &str = "ENERGY";

/// Numeric values for named parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamBinding {
    values: BTreeMap<String, f64>,
}

impl ParamBinding {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build from pairs, rejecting duplicates and the reserved energy name.
    pub fn from_pairs<'a, I>(pairs: I) -> Result<Self, ExprError>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut b = Self::new();
        for (k, v) in pairs {
            b.insert(k, v)?;
        }
        Ok(b)
    }

    pub fn insert(&mut self, name: &str, value: f64) -> Result<(), ExprError> {
        if name == ENERGY {
            return Err(ExprError::ReservedName(name.to_string()));
        }
        if self.values.contains_key(name) {
            return Err(ExprError::DuplicateParam(name.to_string()));
        }
        self.values.insert(name.to_string(), value);
        Ok(())
    }

    /// Insert or overwrite; the energy slot is still rejected.
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), ExprError> {
        if name == ENERGY {
            return Err(ExprError::ReservedName(name.to_string()));
        }
        self.values.insert(name.to_string(), value);
        Ok(())
    }

    /// Copy of this binding with the energy slot filled.
    pub fn with_energy(&self, energy: f64) -> Self {
        let mut b = self.clone();
        b.values.insert(ENERGY.to_string(), energy);
        b
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_energy() {
        assert!(matches!(
            ParamBinding::from_pairs([("a", 1.0), ("a", 2.0)]),
            Err(ExprError::DuplicateParam(_))
        ));
        assert!(matches!(
            ParamBinding::from_pairs([(ENERGY, 1.0)]),
            Err(ExprError::ReservedName(_))
        ));
        let b = ParamBinding::from_pairs([("a", 1.0)])
            .unwrap()
            .with_energy(2.0);
        assert_eq!(b.get(ENERGY), Some(2.0));
    }
}
