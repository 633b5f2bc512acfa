//! Run configuration: flat `key = value` text with section prefixes.
//!
//! ```text
//! # comment
//! model.d = 3
//! gaussian.pairs = 500
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use crate::geometry::ModelParams;
use crate::spectral::Truncation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Count,
    Real,
    Seed,
    Text,
}

/// Every recognised key with its type and default.
const KEYS: &[(&str, Kind, &str)] = &[
    ("model.d", Kind::Count, "2"),
    ("model.mu", Kind::Real, "0.5"),
    ("run.seed", Kind::Seed, "20240611"),
    ("run.out", Kind::Text, "out"),
    ("truncation.n_max", Kind::Count, "40"),
    ("truncation.tail_tol", Kind::Real, "1e-10"),
    ("truncation.t_min", Kind::Real, "0.05"),
    ("basis.n_max", Kind::Count, "10"),
    ("basis.envelope_n_max", Kind::Count, "30"),
    ("basis.grid_radial", Kind::Count, "41"),
    ("basis.grid_angular", Kind::Count, "64"),
    ("basis.stirling_samples", Kind::Count, "10000"),
    ("basis.tol", Kind::Real, "1e-8"),
    ("kernel.points", Kind::Count, "50"),
    ("kernel.rule_degree", Kind::Count, "40"),
    ("kernel.eigen_n_max", Kind::Count, "6"),
    ("kernel.eigen_tol", Kind::Real, "1e-8"),
    ("kernel.mass_tol", Kind::Real, "1e-6"),
    ("kernel.ck_tol", Kind::Real, "1e-5"),
    ("gaussian.pairs", Kind::Count, "500"),
    ("gaussian.t_min", Kind::Real, "0.05"),
    ("gaussian.t_max", Kind::Real, "5"),
    ("gaussian.n_max_refined", Kind::Count, "60"),
    ("gaussian.stability", Kind::Real, "0.2"),
    ("poincare.functions", Kind::Count, "100"),
    ("poincare.regions", Kind::Count, "100"),
    ("poincare.degree", Kind::Count, "6"),
    ("poincare.order", Kind::Count, "6"),
    ("poincare.stability", Kind::Real, "0.2"),
    ("poincare.form_n_max", Kind::Count, "6"),
    ("poincare.form_tol", Kind::Real, "1e-6"),
    ("poincare.transfer_points", Kind::Count, "1000"),
    ("poincare.transfer_tol", Kind::Real, "1e-8"),
    ("intrinsic.eps", Kind::Real, "1e-3"),
    ("intrinsic.delta", Kind::Real, "2e-3"),
    ("intrinsic.pairs", Kind::Count, "1000"),
    ("intrinsic.centers", Kind::Count, "10"),
    ("intrinsic.grid", Kind::Count, "2000"),
    ("intrinsic.tol", Kind::Real, "1e-2"),
    ("maximal.functions", Kind::Count, "10"),
    ("maximal.degree", Kind::Count, "3"),
    ("maximal.t_min", Kind::Real, "0.0025"),
    ("maximal.t_count", Kind::Count, "40"),
    ("maximal.radii", Kind::Count, "24"),
    ("maximal.hl_extra", Kind::Count, "60"),
    ("maximal.hl_centers", Kind::Count, "2000"),
    ("maximal.stability", Kind::Real, "0.2"),
    ("maximal.hl_spread", Kind::Real, "0.3"),
    ("weights.p", Kind::Real, "2"),
    ("weights.regions", Kind::Count, "200"),
    ("weights.order", Kind::Count, "6"),
    ("weights.containment", Kind::Count, "200"),
    ("weights.containment_points", Kind::Count, "1000"),
    ("weights.stability", Kind::Real, "0.2"),
    ("weights.mixed_functions", Kind::Count, "20"),
    ("weights.mixed_degree", Kind::Count, "3"),
];

/// A configuration error, with the line number when it came from a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError { line: Some(n), message } => write!(f, "line {n}: {message}"),
            ConfigError { line: None, message } => f.write_str(message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Count(usize),
    Real(f64),
    Seed(u64),
    Text(String),
}

fn parse_value(kind: Kind, raw: &str) -> Option<Value> {
    match kind {
        Kind::Count => raw.parse().ok().map(Value::Count),
        Kind::Real => raw.parse::<f64>().ok().filter(|v| v.is_finite()).map(Value::Real),
        Kind::Seed => raw.parse().ok().map(Value::Seed),
        Kind::Text => (!raw.is_empty()).then(|| Value::Text(raw.to_string())),
    }
}

fn lookup(key: &str) -> Option<(&'static str, Kind)> {
    KEYS.iter().find(|(k, _, _)| *k == key).map(|(k, kind, _)| (*k, *kind))
}

/// Resolved settings; every key has a value.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, Value>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let values = KEYS
            .iter()
            .map(|(k, kind, v)| (*k, parse_value(*kind, v).expect("default parses")))
            .collect();
        Self { values }
    }
}

impl RunConfig {
    /// Defaults overridden by the lines of `text`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError {
                line: Some(i + 1),
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(k.trim(), v.trim()).map_err(|e| ConfigError {
                line: Some(i + 1),
                message: e.message,
            })?;
        }
        Ok(cfg)
    }

    /// Overrides one key.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        let (k, kind) = lookup(key).ok_or_else(|| ConfigError {
            line: None,
            message: format!("unknown key `{key}`"),
        })?;
        let v = parse_value(kind, raw).ok_or_else(|| ConfigError {
            line: None,
            message: format!("invalid value `{raw}` for `{key}`"),
        })?;
        self.values.insert(k, v);
        Ok(())
    }

    /// All recognised keys.
    pub fn keys() -> impl Iterator<Item = &'static str> {
        KEYS.iter().map(|(k, _, _)| *k)
    }

    pub fn count(&self, key: &str) -> usize {
        match self.values.get(key) {
            Some(Value::Count(v)) => *v,
            _ => panic!("`{key}` is not a count key"),
        }
    }

    pub fn real(&self, key: &str) -> f64 {
        match self.values.get(key) {
            Some(Value::Real(v)) => *v,
            _ => panic!("`{key}` is not a real key"),
        }
    }

    pub fn seed(&self) -> u64 {
        match self.values.get("run.seed") {
            Some(Value::Seed(v)) => *v,
            _ => unreachable!(),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        match self.values.get("run.out") {
            Some(Value::Text(v)) => PathBuf::from(v),
            _ => unreachable!(),
        }
    }

    pub fn params(&self) -> crate::error::Result<ModelParams> {
        ModelParams::new(self.count("model.d"), self.real("model.mu"))
    }

    pub fn truncation(&self) -> crate::error::Result<Truncation> {
        Truncation::new(
            self.count("truncation.n_max"),
            self.real("truncation.tail_tol"),
            self.real("truncation.t_min"),
        )
    }

    /// The file form of the current settings, one key per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let s = match v {
                Value::Count(x) => x.to_string(),
                Value::Real(x) => format!("{x:e}"),
                Value::Seed(x) => x.to_string(),
                Value::Text(x) => x.clone(),
            };
            out.push_str(&format!("{k} = {s}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = RunConfig::parse("# header\n\nmodel.d = 3\n  model.mu=1.5 # trailing\n").unwrap();
        assert_eq!(c.count("model.d"), 3);
        assert_eq!(c.real("model.mu"), 1.5);
        assert_eq!(c.count("gaussian.pairs"), 500);
        let back = RunConfig::parse(&c.render()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = RunConfig::parse("model.d = 2\n\nmodel.dd = 3\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.to_string().starts_with("line 3:"));
        assert_eq!(RunConfig::parse("model.d 2").unwrap_err().line, Some(1));
        assert_eq!(RunConfig::parse("a=1\n").unwrap_err().line, Some(1));
        assert_eq!(RunConfig::parse("\nmodel.mu = x").unwrap_err().line, Some(2));
        assert_eq!(RunConfig::parse("model.d = -1").unwrap_err().line, Some(1));
        let mut c = RunConfig::default();
        assert!(c.set("run.seed", "7").is_ok());
        assert_eq!(c.seed(), 7);
        assert!(c.set("nope", "1").unwrap_err().line.is_none());
    }
}
