//! JSON envelope shared by every command, plus CSV-friendly flattening.

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const TOOL: &str = "hopf-energy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Only present when timing is requested; breaks byte-identical output.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
}

impl Meta {
    pub fn new(command: &str) -> Self {
        Meta {
            tool: TOOL.into(),
            version: crate::VERSION.into(),
            command: command.into(),
            k: None,
            resolution: None,
            seed: None,
            wall_clock_s: None,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn with_resolution(mut self, radial: usize, angular: usize) -> Self {
        self.resolution = Some([radial, angular]);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub meta: Meta,
    /// Overall verdict for commands with a pass/fail notion.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
    pub result: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(meta: Meta, result: T) -> Self {
        Envelope { meta, passed: None, result }
    }

    pub fn with_verdict(mut self, passed: bool) -> Self {
        self.passed = Some(passed);
        self
    }

    /// Pretty JSON with a trailing newline. Deterministic for equal inputs.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Flattens a JSON value into `path,value` pairs, arrays indexed by position.
pub fn flatten(value: &serde_json::Value) -> Vec<(String, String)> {
    let mut out = Vec::new();
    walk("", value, &mut out);
    out
}

fn walk(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
    use serde_json::Value;
    let join = |key: &str| if prefix.is_empty() { key.to_string() } else { format!("{prefix}.{key}") };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, v)| walk(&join(k), v, out)),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, v)| walk(&join(&i.to_string()), v, out)),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_is_stable() {
        let env = Envelope::new(Meta::new("energy").with_k(1).with_seed(7), vec![1.0, 0.1]).with_verdict(true);
        let a = env.to_json().unwrap();
        assert_eq!(a, env.to_json().unwrap());
        assert!(!a.contains("wall_clock"));
        let back: Envelope<Vec<f64>> = serde_json::from_str(&a).unwrap();
        assert_eq!(back, env);
    }

    #[test]
    fn flatten_paths() {
        let v = serde_json::json!({"a": {"b": [1, 2]}, "c": "x", "d": null});
        let f = flatten(&v);
        assert_eq!(f[0], ("a.b.0".into(), "1".into()));
        assert_eq!(f[1], ("a.b.1".into(), "2".into()));
        assert_eq!(f[2], ("c".into(), "x".into()));
        assert_eq!(f[3], ("d".into(), "".into()));
    }
}
