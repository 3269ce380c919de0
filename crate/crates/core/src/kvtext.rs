//! Flat `key = value` text format shared by environment specs, dataset
//! headers and experiment configs.
//!
//! Lines starting with `#` and blank lines are ignored. Keys are unique.
//! Reals are written with 17 significant digits so they round-trip exactly.

use crate::error::{Result, ViperError};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    entries: Vec<(String, String)>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = KvDoc::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                ViperError::parse(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ViperError::parse(format!("line {}: empty key", lineno + 1)));
            }
            if doc.get(k).is_some() {
                return Err(ViperError::parse(format!("line {}: duplicate key `{k}`", lineno + 1)));
            }
            doc.entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(doc)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn set_real(&mut self, key: &str, value: f64) {
        self.set(key, fmt_real(value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| ViperError::parse(format!("missing key `{key}`")))
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| ViperError::parse(format!("key `{key}`: cannot parse `{raw}`")))
    }

    /// Comma-separated list; an empty value yields an empty list.
    pub fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.require(key)?;
        parse_list(raw).map_err(|bad| ViperError::parse(format!("key `{key}`: cannot parse `{bad}`")))
    }

    pub fn to_text(&self, header: &str) -> String {
        let mut out = String::new();
        if !header.is_empty() {
            out.push_str("# ");
            out.push_str(header);
            out.push('\n');
        }
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

pub fn parse_list<T: std::str::FromStr>(raw: &str) -> std::result::Result<Vec<T>, String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| s.to_string()))
        .collect()
}

pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_reals(xs: &[f64], sep: &str) -> String {
    xs.iter().map(|&x| fmt_real(x)).collect::<Vec<_>>().join(sep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 0.99, f64::MAX, 7.0] {
            let s = fmt_real(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn parse_rejects_duplicates_and_garbage() {
        assert!(KvDoc::parse("a = 1\na = 2").is_err());
        assert!(KvDoc::parse("just words").is_err());
        let d = KvDoc::parse("# c\n\nk = 1, 2,3\n").unwrap();
        assert_eq!(d.parse_list::<u32>("k").unwrap(), vec![1, 2, 3]);
    }
}
