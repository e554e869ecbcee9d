//! Flat run configuration: a JSON object or `key = value` lines.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::Value;
use slowfast::allee::AlleeParams;
use slowfast::normalform::NormalFormCoefficients;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Sweep,
    Simulate,
    Sdi,
    Verify,
}

/// Everything a command needs. Flags have already overridden file values.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub values: Config,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub grid: Option<String>,
    pub reversed: bool,
}

pub const DEFAULT_SEED: u64 = 2024;

/// Config keys read by some command, besides the raw coefficient names.
pub const KNOWN_KEYS: &[&str] = &[
    "example", "m", "n", "alpha", "beta", "gamma", "eps", "seed", "coefficients", "a1", "a5", "x0", "y0", "t_max",
    "rel_tol", "abs_tol", "bracket", "seeds", "coincident", "all", "omega2_offset",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    values: BTreeMap<String, Value>,
}

fn scalar(text: &str) -> Value {
    let t = text.trim();
    if let Ok(v) = t.parse::<f64>() {
        return serde_json::Number::from_f64(v).map_or(Value::String(t.into()), Value::Number);
    }
    match t {
        "true" => Value::Bool(true),
        "false" => Value::Bool(false),
        _ => Value::String(t.trim_matches('"').to_string()),
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        let trimmed = text.trim_start();
        let mut values = BTreeMap::new();
        if trimmed.starts_with('{') {
            let v: Value = serde_json::from_str(trimmed).map_err(|e| CliError::Validation(format!("config JSON: {e}")))?;
            let Value::Object(map) = v else { unreachable!("starts with a brace") };
            for (k, v) in map {
                if v.is_object() || v.is_array() {
                    return Err(CliError::Validation(format!("config key {k:?} must hold a scalar")));
                }
                values.insert(k, v);
            }
        } else {
            for (i, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| CliError::Validation(format!("config line {}: expected key = value", i + 1)))?;
                values.insert(k.trim().to_string(), scalar(v));
            }
        }
        Ok(Config { values })
    }

    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn set_f64(&mut self, key: &str, v: f64) {
        if let Some(n) = serde_json::Number::from_f64(v) {
            self.values.insert(key.to_string(), Value::Number(n));
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Rejects keys that no command reads, so typos do not pass silently.
    pub fn check_keys(&self) -> Result<(), CliError> {
        let unknown: Vec<&str> = self
            .keys()
            .filter(|k| !KNOWN_KEYS.contains(k) && !NormalFormCoefficients::KEYS.contains(k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(format!("unknown config key(s): {}", unknown.join(", "))))
        }
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::Number(n)) => Ok(n.as_f64()),
            Some(v) => Err(CliError::Validation(format!("config key {key:?} must be a number, got {v}"))),
        }
    }

    pub fn str(&self, key: &str) -> Option<String> {
        match self.values.get(key)? {
            Value::String(s) => Some(s.clone()),
            v => Some(v.to_string()),
        }
    }

    pub fn bool(&self, key: &str) -> Result<bool, CliError> {
        match self.values.get(key) {
            None => Ok(false),
            Some(Value::Bool(b)) => Ok(*b),
            Some(v) => Err(CliError::Validation(format!("config key {key:?} must be true or false, got {v}"))),
        }
    }

    /// Model parameters: an optional `example = 1|2` preset overridden by
    /// any of m, n, alpha, beta, gamma, eps.
    pub fn model_params(&self) -> Result<AlleeParams, CliError> {
        let preset = match self.f64("example")? {
            None => None,
            Some(v) if v == 1.0 => Some(AlleeParams::EXAMPLE_1),
            Some(v) if v == 2.0 => Some(AlleeParams::EXAMPLE_2),
            Some(v) => return Err(CliError::Validation(format!("example must be 1 or 2, got {v}"))),
        };
        let mut out = [f64::NAN; 6];
        let names = ["m", "n", "alpha", "beta", "gamma", "eps"];
        if let Some(p) = preset {
            out = [p.m, p.n, p.alpha, p.beta, p.gamma, p.eps];
        }
        for (slot, name) in out.iter_mut().zip(names) {
            if let Some(v) = self.f64(name)? {
                *slot = v;
            }
            if slot.is_nan() {
                return Err(CliError::Validation(format!("missing model parameter {name}")));
            }
        }
        let p = AlleeParams { m: out[0], n: out[1], alpha: out[2], beta: out[3], gamma: out[4], eps: out[5] };
        p.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(p)
    }

    /// True when the config describes raw normal-form coefficients.
    pub fn is_raw(&self) -> bool {
        self.contains("coefficients") || self.keys().any(|k| NormalFormCoefficients::KEYS.contains(&k))
    }

    /// Raw coefficients from a JSON file named by `coefficients` and/or
    /// inline keys; absent entries are zero.
    pub fn coefficients(&self) -> Result<NormalFormCoefficients, CliError> {
        let mut nf = match self.str("coefficients") {
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Validation(format!("cannot read coefficients {path}: {e}")))?;
                serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("coefficients {path}: {e}")))?
            }
            None => NormalFormCoefficients::default(),
        };
        for key in NormalFormCoefficients::KEYS {
            if let Some(v) = self.f64(key)? {
                nf.set(key, v).map_err(|e| CliError::Validation(e.to_string()))?;
            }
        }
        nf.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(nf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_and_json_agree() {
        let a = Config::parse("# comment\nm = 0.3\nn=0.1 # trailing\nlabel = run1\nall = true\n").unwrap();
        let b = Config::parse(r#"{"m": 0.3, "n": 0.1, "label": "run1", "all": true}"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.f64("m").unwrap(), Some(0.3));
        assert!(a.bool("all").unwrap());
        assert_eq!(a.str("label").as_deref(), Some("run1"));
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(Config::parse("m 0.3").is_err());
        assert!(Config::parse(r#"{"m": [1, 2]}"#).is_err());
        assert!(Config::parse("m = abc").unwrap().f64("m").is_err());
        assert!(Config::parse("mm = 0.3").unwrap().check_keys().is_err());
        assert!(Config::parse("m = 0.3\nb10 = 1").unwrap().check_keys().is_ok());
    }

    #[test]
    fn presets_and_overrides() {
        let c = Config::parse("example = 2\neps = 0.005").unwrap();
        let p = c.model_params().unwrap();
        assert_eq!(p.m, AlleeParams::EXAMPLE_2.m);
        assert_eq!(p.eps, 0.005);
        assert!(Config::parse("m = 0.3").unwrap().model_params().is_err());
        let bad = Config::parse("example = 1\nn = 1.5").unwrap().model_params().unwrap_err();
        assert!(bad.to_string().contains("0 < n < 1"));
    }

    #[test]
    fn raw_coefficients() {
        let c = Config::parse("b10 = 1.5\nf00 = -0.25").unwrap();
        assert!(c.is_raw());
        let nf = c.coefficients().unwrap();
        assert_eq!(nf.b10, 1.5);
        assert_eq!(nf.f00, -0.25);
        assert!(!Config::parse("example = 1").unwrap().is_raw());
    }
}
