//! `key = value` text files with `#` comments.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KvError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("key {key:?}: cannot parse {value:?}")]
    Value { key: String, value: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
}

/// Parsed key-value pairs. Keys are normalized to kebab-case so that
/// `batch_size` and `batch-size` name the same setting.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

pub fn normalize_key(key: &str) -> String {
    key.trim().replace('_', "-").to_lowercase()
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = BTreeMap::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(KvError::Syntax { line: k + 1 })?;
            if key.trim().is_empty() {
                return Err(KvError::Syntax { line: k + 1 });
            }
            entries.insert(normalize_key(key), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(normalize_key(key), value.to_string());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize_key(key)).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, KvError> {
        match self.get_str(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| KvError::Value {
                key: normalize_key(key),
                value: v.to_string(),
            }),
        }
    }

    /// Overwrite `target` when `key` is present.
    pub fn set<T: FromStr>(&self, key: &str, target: &mut T) -> Result<(), KvError> {
        if let Some(v) = self.get(key)? {
            *target = v;
        }
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Error on the first key outside `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<(), KvError> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(KvError::UnknownKey(k.to_string())),
            None => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_normalizes() {
        let kv = KvMap::parse("# c\nbatch_size = 16\n d-model=64 # trailing\n\n").unwrap();
        assert_eq!(kv.get::<usize>("batch-size").unwrap(), Some(16));
        assert_eq!(kv.get::<usize>("d_model").unwrap(), Some(64));
        assert_eq!(kv.get::<usize>("missing").unwrap(), None);
    }

    #[test]
    fn errors() {
        assert_eq!(
            KvMap::parse("a\n").unwrap_err(),
            KvError::Syntax { line: 1 }
        );
        let kv = KvMap::parse("lr = fast").unwrap();
        assert!(kv.get::<f64>("lr").is_err());
        assert!(kv.check_known(&["seed"]).is_err());
    }
}
