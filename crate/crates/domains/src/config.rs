//! Plain-text `key = value` domain config files.
//!
//! One setting per line, `#` starts a comment, whitespace is ignored.
//! Domains validate keys against their known set so typos fail loudly.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {0}: expected 'key = value'")]
    Malformed(usize),
    #[error("duplicate key '{0}'")]
    Duplicate(String),
    #[error("unknown key '{0}' (allowed: {1})")]
    UnknownKey(String, String),
    #[error("key '{0}': cannot parse '{1}' as {2}")]
    BadValue(String, String, &'static str),
}

/// Parsed key/value settings.
#[derive(Clone, Debug, Default)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Malformed(idx + 1))?;
            let key = key.trim().to_owned();
            let value = value.trim().to_owned();
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Malformed(idx + 1));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(ConfigError::Duplicate(key));
            }
        }
        Ok(KvConfig { entries })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rejects any key outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for key in self.entries.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey(key.clone(), allowed.join(", ")));
            }
        }
        Ok(())
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.entries.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError::BadValue(key.to_owned(), v.clone(), "float")),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.entries.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError::BadValue(key.to_owned(), v.clone(), "integer")),
        }
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.entries.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError::BadValue(key.to_owned(), v.clone(), "integer")),
        }
    }
}
