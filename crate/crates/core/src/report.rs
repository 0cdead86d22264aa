//! Check records and the JSON run report.
//!
//! Floats are written with 17 significant digits (`{:.16e}`); non-finite
//! values become `null`.

use std::str::FromStr;

use serde::{Serialize, Serializer};
use serde_json::{Map, Number, Value};

pub const SCHEMA_VERSION: u32 = 1;

pub fn json_f64(x: f64) -> Value {
    if x.is_finite() {
        Value::Number(
            Number::from_str(&format!("{x:.16e}")).expect("formatted float is valid JSON"),
        )
    } else {
        Value::Null
    }
}

fn ser_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    json_f64(*x).serialize(s)
}

/// One named residual compared against its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    #[serde(serialize_with = "ser_f64")]
    pub value: f64,
    #[serde(serialize_with = "ser_f64")]
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckReport {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
            note: None,
        }
    }

    /// Passes when `value < tolerance`.
    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            pass: value < tolerance,
            ..Self::at_most(name, value, tolerance)
        }
    }

    /// Passes when `value > threshold`.
    pub fn above(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            pass: value > threshold,
            ..Self::at_most(name, value, threshold)
        }
    }

    /// Passes when `value >= threshold`.
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            pass: value >= threshold,
            ..Self::at_most(name, value, threshold)
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub params: Map<String, Value>,
    pub checks: Vec<CheckReport>,
    /// Recorded comparisons that do not gate the exit status.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<CheckReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub tables: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
}

impl RunReport {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            params: Map::new(),
            checks: Vec::new(),
            findings: Vec::new(),
            tables: Vec::new(),
            wall_time_ms: None,
        }
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn param_f64(&mut self, key: &str, value: f64) -> &mut Self {
        self.params.insert(key.to_string(), json_f64(value));
        self
    }

    pub fn push(&mut self, check: CheckReport) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, checks: impl IntoIterator<Item = CheckReport>) {
        self.checks.extend(checks);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        let text = json_f64(0.1).to_string();
        assert!(text.starts_with("1.0000000000000001e"), "{text}");
        let text = json_f64(-1.0).to_string();
        assert!(text.starts_with("-1.0000000000000000e"), "{text}");
        assert_eq!(json_f64(f64::NAN), Value::Null);
        let back: f64 = json_f64(std::f64::consts::PI).to_string().parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }

    #[test]
    fn check_comparisons() {
        assert!(CheckReport::at_most("x", 1.0, 1.0).pass);
        assert!(!CheckReport::below("x", 1.0, 1.0).pass);
        assert!(CheckReport::above("x", 1e-300, 0.0).pass);
        assert!(!CheckReport::above("x", 0.0, 0.0).pass);
    }

    #[test]
    fn report_status_and_json() {
        let mut r = RunReport::new("demo");
        r.param("n", 2).param_f64("tol", 1e-10);
        r.push(CheckReport::at_most("a", 0.0, 1.0));
        assert!(r.all_pass());
        r.push(CheckReport::at_most("b", 2.0, 1.0).with_note("too big"));
        assert!(!r.all_pass());
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["checks"][1]["note"], "too big");
        assert!(v.get("wall_time_ms").is_none());
    }
}
