//! Deterministic text output for energies and wavefunctions.

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

/// Scientific notation with 17 significant digits, the shortest width that
/// round-trips every `f64`.
pub fn format_sig17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Serializes an `f64` as a JSON number in [`format_sig17`] form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sig17(pub f64);

impl Serialize for Sig17 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(format_sig17(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

/// `{"energies":[...]}` with every value in [`Sig17`] form.
pub fn energies_json(energies: &[f64]) -> String {
    #[derive(Serialize)]
    struct Doc {
        energies: Vec<Sig17>,
    }
    let doc = Doc {
        energies: energies.iter().copied().map(Sig17).collect(),
    };
    serde_json::to_string(&doc).expect("plain data serializes")
}

/// One row per node: `x,psi_0,...,psi_{k-1}`.
pub fn wavefunction_csv(x: &[f64], states: &[Vec<f64>]) -> String {
    let mut out = String::from("x");
    for i in 0..states.len() {
        out.push_str(&format!(",psi_{i}"));
    }
    out.push('\n');
    for (j, xj) in x.iter().enumerate() {
        out.push_str(&format_sig17(*xj));
        for s in states {
            out.push(',');
            out.push_str(&format_sig17(s[j]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig17_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 123_456_789.123_456_79, f64::MAX] {
            assert_eq!(format_sig17(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_sig17(1.5), "1.5000000000000000e0");
    }

    #[test]
    fn json_keeps_digits() {
        let text = energies_json(&[0.5, 1.5]);
        assert_eq!(
            text,
            r#"{"energies":[5.0000000000000000e-1,1.5000000000000000e0]}"#
        );
        assert_eq!(serde_json::to_string(&Sig17(f64::NAN)).unwrap(), "null");
    }

    #[test]
    fn csv_layout() {
        let csv = wavefunction_csv(&[0.0, 1.0], &[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "x,psi_0,psi_1");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("1.0000000000000000e0,"));
    }
}
