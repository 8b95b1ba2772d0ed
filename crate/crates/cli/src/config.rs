//! Flat `key = value` configuration. Command-line flags override file values,
//! which override built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    /// Blank lines and lines starting with `#` are ignored. Keys are case-sensitive;
    /// `-` and `_` are interchangeable.
    pub fn parse(src: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in src.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Contract(format!("config line {}: expected key=value", i + 1)))?;
            let key = normalize_key(k.trim());
            if key.is_empty() {
                return Err(CliError::Contract(format!("config line {}: empty key", i + 1)));
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Contract(format!("config line {}: duplicate key '{key}'", i + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        crate::io::require(path)?;
        let src = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&src)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(&normalize_key(key)).map(String::as_str)
    }

    /// Flag value if given, else the config value, else `default`.
    pub fn pick<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|e| CliError::Contract(format!("config key '{key}': {e}"))),
            None => Ok(default),
        }
    }

    pub fn pick_opt<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.get(key)
            .map(|raw| raw.parse().map_err(|e| CliError::Contract(format!("config key '{key}': {e}"))))
            .transpose()
    }

    /// SHA-256 of the canonical `key=value` listing.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.values {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

fn normalize_key(k: &str) -> String {
    k.replace('-', "_")
}
