//! Flat `key = value` text documents with `#` comments, used by the stats
//! file, run configs and checkpoint headers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KvError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("line {line}: bad value {value:?} for `{key}`: {msg}")]
    Value { line: usize, key: String, value: String, msg: String },
    #[error("unknown key `{key}` at line {line}")]
    Unknown { line: usize, key: String },
}

/// Formats `v` with 9 significant digits, which round-trips every `f32`.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..15).contains(&exp) {
        return format!("{v:.8e}");
    }
    let decimals = (8 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s
    }
}

/// Parsed document. Keys are looked up through [`KvDoc::get`] and friends;
/// [`KvDoc::finish`] then rejects anything never asked for.
#[derive(Clone, Debug, Default)]
pub struct KvDoc {
    entries: BTreeMap<String, (String, usize)>,
    order: Vec<String>,
    used: BTreeSet<String>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut doc = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body.split_once('=').ok_or_else(|| KvError::Syntax { line, text: raw.to_owned() })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(KvError::Syntax { line, text: raw.to_owned() });
            }
            if doc.entries.insert(k.to_owned(), (v.to_owned(), line)).is_some() {
                return Err(KvError::Duplicate { line, key: k.to_owned() });
            }
            doc.order.push(k.to_owned());
        }
        Ok(doc)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&mut self, key: &str) -> Option<&str> {
        let (v, _) = self.entries.get(key)?;
        self.used.insert(key.to_owned());
        Some(v)
    }

    pub fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, KvError>
    where
        T::Err: Display,
    {
        let Some((v, line)) = self.entries.get(key) else {
            return Ok(None);
        };
        self.used.insert(key.to_owned());
        v.parse().map(Some).map_err(|e: T::Err| KvError::Value {
            line: *line,
            key: key.to_owned(),
            value: v.clone(),
            msg: e.to_string(),
        })
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T, KvError>
    where
        T::Err: Display,
    {
        self.get(key)?.ok_or_else(|| KvError::Missing(key.to_owned()))
    }

    /// Error for a key whose value parsed but is semantically invalid.
    pub fn invalid(&self, key: &str, msg: impl Into<String>) -> KvError {
        let (value, line) = self.entries.get(key).cloned().unwrap_or_default();
        KvError::Value { line, key: key.to_owned(), value, msg: msg.into() }
    }

    /// Rejects keys that were never read.
    pub fn finish(self) -> Result<(), KvError> {
        for key in &self.order {
            if !self.used.contains(key) {
                return Err(KvError::Unknown { line: self.entries[key].1, key: key.clone() });
            }
        }
        Ok(())
    }
}
