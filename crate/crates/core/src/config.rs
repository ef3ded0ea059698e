//! `key = value` configuration files.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parsed key/value pairs. `#` starts a comment; blank lines are ignored.
#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    values: BTreeMap<String, String>,
    used: BTreeSet<String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
        }
        Ok(KvConfig {
            values,
            used: BTreeSet::new(),
        })
    }

    /// Value of `key` parsed as `T`, or `default` when absent.
    pub fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.used.insert(key.to_string());
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| Error::Config(format!("`{key} = {v}`: {e}"))),
        }
    }

    /// Fails on keys nobody asked for.
    pub fn finish(&self) -> Result<()> {
        let unknown: Vec<&str> = self.values.keys().filter(|k| !self.used.contains(*k)).map(String::as_str).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_tracks_keys() {
        let mut c = KvConfig::parse("depth = 2 # levels\n\n# comment\nclamp=true\n").unwrap();
        assert_eq!(c.get("depth", 3usize).unwrap(), 2);
        assert_eq!(c.get("width", 32usize).unwrap(), 32);
        assert!(c.finish().is_err());
        assert!(c.get("clamp", false).unwrap());
        c.finish().unwrap();
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KvConfig::parse("depth 2").is_err());
        assert!(KvConfig::parse("a = 1\na = 2").is_err());
        let mut c = KvConfig::parse("depth = two").unwrap();
        assert!(c.get("depth", 1usize).is_err());
    }
}
