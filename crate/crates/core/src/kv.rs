//! Line-oriented `key=value` files. `#` starts a comment line.

use std::str::FromStr;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("line {line}: {reason}")]
pub struct KvError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct KvFile {
    entries: Vec<(usize, String, String)>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(KvError { line: i + 1, reason: format!("expected key=value, got `{line}`") });
            };
            entries.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        Ok(KvFile { entries })
    }

    pub fn keys(&self) -> impl Iterator<Item = (usize, &str)> {
        self.entries.iter().map(|(l, k, _)| (*l, k.as_str()))
    }

    fn find(&self, key: &str) -> Option<&(usize, String, String)> {
        self.entries.iter().rev().find(|(_, k, _)| k == key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, KvError> {
        match self.find(key) {
            None => Ok(None),
            Some((line, _, v)) => {
                v.parse().map(Some).map_err(|_| KvError { line: *line, reason: format!("bad value `{v}` for {key}") })
            }
        }
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, KvError> {
        match self.find(key) {
            None => Ok(None),
            Some((line, _, v)) => v
                .split(',')
                .map(|item| {
                    item.trim().parse().map_err(|_| KvError {
                        line: *line,
                        reason: format!("bad list item `{}` for {key}", item.trim()),
                    })
                })
                .collect::<Result<Vec<T>, _>>()
                .map(Some),
        }
    }

    /// Fails on the first key not in `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<(), KvError> {
        for (line, k) in self.keys() {
            if !known.contains(&k) {
                return Err(KvError { line, reason: format!("unknown key `{k}`") });
            }
        }
        Ok(())
    }
}
