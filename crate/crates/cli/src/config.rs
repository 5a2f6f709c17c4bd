//! Line-oriented `key = value` configuration with `[section]` headers.
//!
//! `#` and `;` start comments. Numbers may be written as constant expressions
//! (`e`, `2*pi`, `exp(1)`); lists are comma separated. Every value read by a
//! command is recorded, with defaults filled in, as the effective config.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use ringmod_core::expr::Expr;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut sections: BTreeMap<String, BTreeMap<String, Entry>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::config(line_no, format!("unterminated section header `{line}`")))?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                    return Err(CliError::config(line_no, format!("bad section name `{name}`")));
                }
                sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(line_no, format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let section = current.as_ref().ok_or_else(|| CliError::config(line_no, format!("key `{key}` outside any section")))?;
            if key.is_empty() {
                return Err(CliError::config(line_no, "empty key".into()));
            }
            let table = sections.get_mut(section).expect("section inserted");
            if table.contains_key(key) {
                return Err(CliError::config(line_no, format!("duplicate key `{section}.{key}`")));
            }
            table.insert(key.to_string(), Entry { value: value.trim().to_string(), line: line_no });
        }
        Ok(Self { sections })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|s| s.get(key))
    }
}

/// Effective configuration: every key a command used, defaults included.
pub type Effective = BTreeMap<String, BTreeMap<String, String>>;

/// Typed access to a [`ConfigFile`] that records what was used.
pub struct Params<'a> {
    file: &'a ConfigFile,
    used: RefCell<Effective>,
}

fn number(text: &str) -> Option<f64> {
    if let Ok(v) = text.parse::<f64>() {
        return Some(v);
    }
    let e = Expr::parse(text).ok()?;
    if e.max_variable() > 0 {
        return None;
    }
    Some(e.eval(&[]))
}

impl<'a> Params<'a> {
    pub fn new(file: &'a ConfigFile) -> Self {
        Self { file, used: RefCell::new(BTreeMap::new()) }
    }

    fn record(&self, section: &str, key: &str, value: impl Display) {
        self.used.borrow_mut().entry(section.to_string()).or_default().insert(key.to_string(), value.to_string());
    }

    fn bad(&self, section: &str, key: &str, what: &str) -> CliError {
        let e = self.file.get(section, key).expect("present");
        CliError::config(e.line, format!("`{section}.{key} = {}`: expected {what}", e.value))
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<String> {
        self.file.get(section, key).map(|e| e.value.clone())
    }

    pub fn string(&self, section: &str, key: &str, default: &str) -> String {
        let v = self.raw(section, key).unwrap_or_else(|| default.to_string());
        self.record(section, key, &v);
        v
    }

    pub fn required_string(&self, section: &str, key: &str) -> Result<String, CliError> {
        let v = self.raw(section, key).ok_or_else(|| CliError::Config(format!("missing required key `{section}.{key}`")))?;
        self.record(section, key, &v);
        Ok(v)
    }

    pub fn choice(&self, section: &str, key: &str, default: &str, allowed: &[&str]) -> Result<String, CliError> {
        let v = self.string(section, key, default);
        if !allowed.contains(&v.as_str()) {
            return Err(self.bad(section, key, &format!("one of {}", allowed.join(", "))));
        }
        Ok(v)
    }

    pub fn opt_f64(&self, section: &str, key: &str) -> Result<Option<f64>, CliError> {
        match self.raw(section, key) {
            None => {
                self.record(section, key, "auto");
                Ok(None)
            }
            Some(s) if s == "auto" => {
                self.record(section, key, "auto");
                Ok(None)
            }
            Some(s) => {
                let v = number(&s).ok_or_else(|| self.bad(section, key, "a number"))?;
                self.record(section, key, format_f64(v));
                Ok(Some(v))
            }
        }
    }

    pub fn f64(&self, section: &str, key: &str, default: f64) -> Result<f64, CliError> {
        let v = match self.raw(section, key) {
            None => default,
            Some(s) => number(&s).ok_or_else(|| self.bad(section, key, "a number"))?,
        };
        self.record(section, key, format_f64(v));
        Ok(v)
    }

    pub fn required_f64(&self, section: &str, key: &str) -> Result<f64, CliError> {
        if self.raw(section, key).is_none() {
            return Err(CliError::Config(format!("missing required key `{section}.{key}`")));
        }
        self.f64(section, key, f64::NAN)
    }

    pub fn usize(&self, section: &str, key: &str, default: usize) -> Result<usize, CliError> {
        let v = match self.raw(section, key) {
            None => default,
            Some(s) => s.parse().map_err(|_| self.bad(section, key, "a nonnegative integer"))?,
        };
        self.record(section, key, v);
        Ok(v)
    }

    pub fn u64(&self, section: &str, key: &str, default: u64) -> Result<u64, CliError> {
        let v = match self.raw(section, key) {
            None => default,
            Some(s) => s.parse().map_err(|_| self.bad(section, key, "a nonnegative integer"))?,
        };
        self.record(section, key, v);
        Ok(v)
    }

    pub fn bool(&self, section: &str, key: &str, default: bool) -> Result<bool, CliError> {
        let v = match self.raw(section, key).as_deref() {
            None => default,
            Some("true" | "yes" | "1") => true,
            Some("false" | "no" | "0") => false,
            Some(_) => return Err(self.bad(section, key, "true or false")),
        };
        self.record(section, key, v);
        Ok(v)
    }

    pub fn list_f64(&self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        let v = match self.raw(section, key) {
            None => default.to_vec(),
            Some(s) => s
                .split(',')
                .map(|t| number(t.trim()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| self.bad(section, key, "a comma-separated list of numbers"))?,
        };
        self.record(section, key, join(&v));
        Ok(v)
    }

    pub fn required_list_f64(&self, section: &str, key: &str) -> Result<Vec<f64>, CliError> {
        if self.raw(section, key).is_none() {
            return Err(CliError::Config(format!("missing required key `{section}.{key}`")));
        }
        self.list_f64(section, key, &[])
    }

    /// Records a value computed from other keys.
    pub fn derived(&self, section: &str, key: &str, value: impl Display) {
        self.record(section, key, value);
    }

    /// Fails on keys the command never read, and returns the effective config.
    pub fn finish(self) -> Result<Effective, CliError> {
        let used = self.used.into_inner();
        for (section, table) in &self.file.sections {
            for (key, entry) in table {
                let seen = used.get(section).is_some_and(|t| t.contains_key(key));
                if !seen {
                    return Err(CliError::config(entry.line, format!("unknown key `{section}.{key}` for this command")));
                }
            }
        }
        Ok(used)
    }
}

/// Shortest round-trip form, in exponent notation outside `[1e-4, 1e15)`.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

pub fn join(values: &[f64]) -> String {
    values.iter().map(|&v| format_f64(v)).collect::<Vec<_>>().join(", ")
}

/// A configuration file plus command-line overrides.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: crate::Command,
    pub file: ConfigFile,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub csv: bool,
}

impl RunConfig {
    pub fn from_path(command: crate::Command, path: &Path) -> Result<Self, CliError> {
        Ok(Self { command, file: ConfigFile::load(path)?, seed: None, out: None, csv: false })
    }

    pub fn from_text(command: crate::Command, text: &str) -> Result<Self, CliError> {
        Ok(Self { command, file: ConfigFile::parse(text)?, seed: None, out: None, csv: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let f = ConfigFile::parse("# top\n[grid]\ndim = 3 ; three\ncells=16\n\n[ring]\nr2 = e\n").unwrap();
        let p = Params::new(&f);
        assert_eq!(p.usize("grid", "dim", 2).unwrap(), 3);
        assert_eq!(p.usize("grid", "cells", 8).unwrap(), 16);
        assert_eq!(p.f64("ring", "r2", 0.0).unwrap(), std::f64::consts::E);
        assert_eq!(p.f64("ring", "r1", 1.0).unwrap(), 1.0);
        let eff = p.finish().unwrap();
        assert_eq!(eff["ring"]["r1"], "1");
    }

    #[test]
    fn reports_line_numbers() {
        let err = ConfigFile::parse("[a]\nx = 1\nnot a pair\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(ConfigFile::parse("x = 1\n").is_err());
        assert!(ConfigFile::parse("[a]\nx = 1\nx = 2\n").is_err());
        assert!(ConfigFile::parse("[a b]\n").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let f = ConfigFile::parse("[grid]\ndim = 2\ncell = 4\n").unwrap();
        let p = Params::new(&f);
        p.usize("grid", "dim", 2).unwrap();
        let err = p.finish().unwrap_err();
        assert!(err.to_string().contains("grid.cell"), "{err}");
    }

    #[test]
    fn typed_values() {
        let f = ConfigFile::parse("[s]\nxs = 0, 2*pi, -1e-3\nb = yes\nn = 1.5\nq = x1\n").unwrap();
        let p = Params::new(&f);
        let xs = p.list_f64("s", "xs", &[]).unwrap();
        assert_eq!(xs, vec![0.0, 2.0 * std::f64::consts::PI, -1e-3]);
        assert!(p.bool("s", "b", false).unwrap());
        assert!(p.usize("s", "n", 0).is_err());
        assert!(p.f64("s", "q", 0.0).is_err());
        assert_eq!(p.opt_f64("s", "missing").unwrap(), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn formatted_numbers_round_trip(v in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
                let text = format_f64(v);
                prop_assert_eq!(number(&text), Some(v));
            }

            #[test]
            fn parse_round_trip(
                table in prop::collection::btree_map(
                    "[a-z][a-z0-9_]{0,6}",
                    prop::collection::btree_map("[a-z][a-z0-9_]{0,6}", "[a-zA-Z0-9.,+*/()^ -]{0,12}", 0..4),
                    1..4,
                )
            ) {
                let mut text = String::new();
                for (section, keys) in &table {
                    text += &format!("[{section}]\n");
                    for (k, v) in keys {
                        text += &format!("{k} = {v}  # note\n");
                    }
                }
                let file = ConfigFile::parse(&text).unwrap();
                let p = Params::new(&file);
                for (section, keys) in &table {
                    for (k, v) in keys {
                        prop_assert_eq!(p.string(section, k, "?"), v.trim());
                    }
                }
                prop_assert!(p.finish().is_ok());
            }
        }
    }
}
