use std::fmt::Write as _;

use crate::datagen::CorruptionSpec;
use crate::error::{Error, Result};
use crate::model::AttributeMapping;
use crate::svm::{Gamma, KernelKind, SvmConfig};

/// One experiment cell. Loads from flat `key=value` text; every key can be
/// overridden individually through [`ExperimentConfig::set`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kernel: KernelKind,
    pub c: f64,
    pub gamma: Gamma,
    pub seed: u64,
    pub errors_per_row: u32,
    /// `None` selects the default mapping derived from the two schemas.
    pub mapping: Option<AttributeMapping>,
    pub training_size: usize,
    pub reference_size: usize,
    pub match_size: usize,
    pub repetitions: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kernel: KernelKind::Linear,
            c: 100.0,
            gamma: Gamma::Auto,
            seed: 42,
            errors_per_row: 1,
            mapping: None,
            training_size: 2000,
            reference_size: 2000,
            match_size: 2000,
            repetitions: 3,
        }
    }
}

pub const KEYS: &[&str] = &[
    "kernel",
    "c",
    "gamma",
    "seed",
    "errors_per_row",
    "mapping",
    "training_size",
    "reference_size",
    "match_size",
    "repetitions",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::config(format!("bad value '{value}' for {key}: {e}")))
}

impl ExperimentConfig {
    pub fn parse_kv(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        match key.as_str() {
            "kernel" => self.kernel = value.parse()?,
            "c" => self.c = parse(&key, value)?,
            "gamma" => self.gamma = value.parse()?,
            "seed" => self.seed = parse(&key, value)?,
            "errors_per_row" => self.errors_per_row = parse(&key, value)?,
            "mapping" => {
                self.mapping = match value {
                    "" | "auto" | "default" => None,
                    v => Some(v.parse()?),
                }
            }
            "training_size" | "train_size" => self.training_size = parse(&key, value)?,
            "reference_size" | "rs" | "rs_size" => self.reference_size = parse(&key, value)?,
            "match_size" => self.match_size = parse(&key, value)?,
            "repetitions" => self.repetitions = parse(&key, value)?,
            other => return Err(Error::config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::config(format!("C must be positive, got {}", self.c)));
        }
        if let Gamma::Value(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::config(format!("gamma must be positive, got {g}")));
            }
        }
        if self.errors_per_row == 0 {
            return Err(Error::config("errors_per_row must be at least 1"));
        }
        for (name, v) in [
            ("training_size", self.training_size),
            ("reference_size", self.reference_size),
            ("match_size", self.match_size),
            ("repetitions", self.repetitions as usize),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mapping = self.mapping.as_ref().map_or("auto".to_string(), ToString::to_string);
        let _ = writeln!(s, "kernel={}", self.kernel);
        let _ = writeln!(s, "c={}", self.c);
        let _ = writeln!(s, "gamma={}", self.gamma);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "errors_per_row={}", self.errors_per_row);
        let _ = writeln!(s, "mapping={mapping}");
        let _ = writeln!(s, "training_size={}", self.training_size);
        let _ = writeln!(s, "reference_size={}", self.reference_size);
        let _ = writeln!(s, "match_size={}", self.match_size);
        let _ = writeln!(s, "repetitions={}", self.repetitions);
        s
    }

    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            kernel: self.kernel,
            c: self.c,
            gamma: self.gamma,
            ..SvmConfig::default()
        }
    }

    /// Corruption used for synthetic training data, keyed by `seed`.
    pub fn corruption_spec(&self, seed: u64) -> CorruptionSpec {
        CorruptionSpec {
            errors_per_row: self.errors_per_row,
            rng_seed: seed,
            ..CorruptionSpec::default()
        }
    }

    pub fn resolve_mapping(&self, record_schema: &[String], reference_schema: &[String]) -> Result<AttributeMapping> {
        let mapping = self
            .mapping
            .clone()
            .unwrap_or_else(|| AttributeMapping::default_for(record_schema, reference_schema));
        mapping.validate(record_schema, reference_schema)?;
        Ok(mapping)
    }
}
