//! Shared parsing for the `name:key=value,key=value` text forms.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parsed `key=value` pairs in their original order.
#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    pairs: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(s: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        let mut column = 1;
        for item in s.split(',') {
            let trimmed = item.trim();
            if !trimmed.is_empty() {
                let (k, v) = trimmed.split_once('=').ok_or_else(|| {
                    Error::parse(1, column, format!("expected key=value, found '{trimmed}'"))
                })?;
                if pairs.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                    return Err(Error::parse(1, column, format!("duplicate key '{}'", k.trim())));
                }
            }
            column += item.len() + 1;
        }
        Ok(Self { pairs })
    }

    pub fn opt_str(&self, key: &str) -> Option<&str> {
        self.pairs.get(key).map(String::as_str)
    }

    fn typed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.pairs.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::parse(1, 1, format!("bad value '{v}' for '{key}'"))),
        }
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        self.typed(key)
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>> {
        self.typed(key)
    }

    pub fn opt_u64(&self, key: &str) -> Result<Option<u64>> {
        self.typed(key)
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.opt_f64(key)?
            .ok_or_else(|| Error::parse(1, 1, format!("missing '{key}'")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.opt_usize(key)?
            .ok_or_else(|| Error::parse(1, 1, format!("missing '{key}'")))
    }

    /// Fails on any key outside `allowed`.
    pub fn finish(&self, allowed: &[&str]) -> Result<()> {
        match self.pairs.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::parse(1, 1, format!("unknown key '{k}'"))),
            None => Ok(()),
        }
    }
}

/// Splits `head:params` into the head and its parameters.
pub fn parse_head(s: &str) -> Result<(&str, KeyValues)> {
    match s.split_once(':') {
        Some((h, rest)) => Ok((h.trim(), KeyValues::parse(rest)?)),
        None => Ok((s.trim(), KeyValues::default())),
    }
}
