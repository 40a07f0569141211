//! Flat `key=value` text blocks: run configs, config echoes embedded in
//! checkpoints, and run manifests.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Keys keep their first-seen order so echoes are byte-stable.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KvMap {
    entries: Vec<(String, String)>,
    consumed: RefCell<BTreeSet<String>>,
}

impl KvMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = KvMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(line, format!("line {}: expected key=value", lineno + 1))
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::config("", format!("line {}: empty key", lineno + 1)));
            }
            if map.get(k).is_some() {
                return Err(Error::config(k, format!("line {}: duplicate key", lineno + 1)));
            }
            map.entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(map)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Inserts or replaces, keeping the original position on replace.
    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Typed lookup that marks the key as consumed.
    pub fn take<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.consumed.borrow_mut().insert(key.to_string());
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::config(key, format!("cannot parse `{raw}`: {e}"))),
        }
    }

    pub fn take_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn take_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        let Some(raw) = self.take::<String>(key)? else {
            return Ok(None);
        };
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| Error::config(key, format!("cannot parse `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Rejects any key never looked up through `take*`.
    pub fn reject_unknown(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        match self.keys().find(|k| !consumed.contains(*k)) {
            Some(k) => Err(Error::config(k, "unknown key")),
            None => Ok(()),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let m = KvMap::parse("# header\n\nt_max = 6  # horizon\nname=x=y\n").unwrap();
        assert_eq!(m.get("t_max"), Some("6"));
        assert_eq!(m.get("name"), Some("x=y"));
        assert_eq!(m.take::<usize>("t_max").unwrap(), Some(6));
    }

    #[test]
    fn unknown_key_is_named() {
        let m = KvMap::parse("a=1\nbogus=2\n").unwrap();
        let _ = m.take::<u32>("a").unwrap();
        match m.reject_unknown() {
            Err(Error::ConfigInvalid { key, .. }) => assert_eq!(key, "bogus"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_value_names_key() {
        let m = KvMap::parse("T=abc").unwrap();
        match m.take::<usize>("T") {
            Err(Error::ConfigInvalid { key, .. }) => assert_eq!(key, "T"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_missing_equals_rejected() {
        assert!(KvMap::parse("a=1\na=2").is_err());
        assert!(KvMap::parse("justakey").is_err());
    }

    #[test]
    fn render_round_trips() {
        let mut m = KvMap::new();
        m.set("b", 2);
        m.set("a", "x");
        m.set("b", 3);
        let text = m.render();
        assert_eq!(text, "b=3\na=x\n");
        let back = KvMap::parse(&text).unwrap();
        assert_eq!(back.render(), text);
    }

    #[test]
    fn lists() {
        let m = KvMap::parse("c = 2, 4,6").unwrap();
        assert_eq!(m.take_list::<usize>("c").unwrap(), Some(vec![2, 4, 6]));
    }
}
