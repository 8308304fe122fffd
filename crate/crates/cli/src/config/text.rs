//! Line-level syntax: sections, `key = value` entries and typed value
//! readers that collect errors instead of stopping at the first one.

use super::units::{self, Dim};
use super::{ConfigError, ConfigErrorKind};

#[derive(Debug, Clone)]
pub(crate) struct RawEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct RawSection {
    pub name: String,
    pub line: usize,
    pub entries: Vec<RawEntry>,
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Splits the text into sections. Comments start at `#` or `;`.
pub(crate) fn lex(text: &str, errors: &mut Vec<ConfigError>) -> Vec<RawSection> {
    let mut sections: Vec<RawSection> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split(['#', ';']).next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']').map(str::trim) else {
                errors.push(ConfigError::syntax(line, "unterminated section header"));
                continue;
            };
            if !is_ident(name) {
                errors.push(ConfigError::syntax(line, format!("bad section name `{name}`")));
                continue;
            }
            if let Some(first) = sections.iter().find(|s| s.name == name) {
                errors.push(ConfigError {
                    line,
                    kind: ConfigErrorKind::DuplicateSection {
                        section: name.into(),
                        first: first.line,
                    },
                });
                continue;
            }
            sections.push(RawSection {
                name: name.into(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            errors.push(ConfigError::syntax(line, "expected `key = value` or `[section]`"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if !is_ident(key) {
            errors.push(ConfigError::syntax(line, format!("bad key `{key}`")));
            continue;
        }
        if value.is_empty() {
            errors.push(ConfigError::syntax(line, format!("empty value for `{key}`")));
            continue;
        }
        let Some(section) = sections.last_mut() else {
            errors.push(ConfigError::syntax(line, format!("`{key}` appears before any section")));
            continue;
        };
        if let Some(first) = section.entries.iter().find(|e| e.key == key) {
            errors.push(ConfigError {
                line,
                kind: ConfigErrorKind::DuplicateKey {
                    section: section.name.clone(),
                    key: key.into(),
                    first: first.line,
                },
            });
            continue;
        }
        section.entries.push(RawEntry {
            key: key.into(),
            value: value.into(),
            line,
        });
    }
    sections
}

fn decimal_exponent(k: f64) -> Option<i32> {
    let x = k.log10().round() as i32;
    (format!("1e{x}").parse::<f64>() == Ok(k)).then_some(x)
}

/// Typed access to one section. Every entry must be consumed; leftovers are
/// reported as unknown keys by [`Fields::finish`].
pub(crate) struct Fields<'e> {
    pub section: String,
    pub line: usize,
    entries: Vec<RawEntry>,
    errors: &'e mut Vec<ConfigError>,
}

impl<'e> Fields<'e> {
    pub fn new(raw: &RawSection, errors: &'e mut Vec<ConfigError>) -> Self {
        Self {
            section: raw.name.clone(),
            line: raw.line,
            entries: raw.entries.clone(),
            errors,
        }
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.iter().any(|e| e.key == key)
    }

    fn take(&mut self, key: &str) -> Option<RawEntry> {
        let pos = self.entries.iter().position(|e| e.key == key)?;
        Some(self.entries.remove(pos))
    }

    fn push(&mut self, line: usize, kind: ConfigErrorKind) {
        self.errors.push(ConfigError { line, kind });
    }

    fn invalid(&mut self, e: &RawEntry, msg: impl Into<String>) {
        self.push(
            e.line,
            ConfigErrorKind::InvalidValue {
                key: e.key.clone(),
                msg: msg.into(),
            },
        );
    }

    /// Reports a problem with the section as a whole.
    pub fn error(&mut self, msg: impl Into<String>) {
        let (line, section) = (self.line, self.section.clone());
        self.push(
            line,
            ConfigErrorKind::Invalid {
                section,
                msg: msg.into(),
            },
        );
    }

    /// Splits a trailing unit suffix off `text` and returns the SI scale.
    fn unit_scale(&mut self, e: &RawEntry, text: &str, dim: Dim) -> Option<(String, f64)> {
        let text = text.trim();
        let (number, suffix) = match text.rsplit_once(char::is_whitespace) {
            Some((n, s)) if units::is_unit(s) || s.parse::<f64>().is_err() => (n.trim(), Some(s)),
            _ => (text, None),
        };
        let Some(suffix) = suffix else {
            return Some((number.to_string(), 1.0));
        };
        match units::scale(suffix, dim) {
            Ok(k) => Some((number.to_string(), k)),
            Err(_) => {
                self.push(
                    e.line,
                    ConfigErrorKind::UnitMismatch {
                        key: e.key.clone(),
                        unit: suffix.into(),
                        expected: dim.name(),
                    },
                );
                None
            }
        }
    }

    fn number(&mut self, e: &RawEntry, text: &str) -> Option<f64> {
        self.scaled(e, text, 1.0)
    }

    /// Parses `text` times `k`. Power-of-ten scales are applied to the
    /// decimal exponent so that `26.75 mA` is the double nearest 0.02675.
    fn scaled(&mut self, e: &RawEntry, text: &str, k: f64) -> Option<f64> {
        let text = text.trim();
        let parsed = match decimal_exponent(k) {
            Some(shift) => {
                let (mantissa, exp) = match text.split_once(['e', 'E']) {
                    Some((m, x)) => (m, x.parse::<i32>().ok()),
                    None => (text, Some(0)),
                };
                match exp {
                    Some(x) if !mantissa.is_empty() => format!("{mantissa}e{}", x + shift).parse::<f64>().ok(),
                    _ => None,
                }
            }
            None => text.parse::<f64>().ok().map(|v| v * k),
        };
        match parsed {
            Some(v) if v.is_finite() && text.parse::<f64>().is_ok() => Some(v),
            _ => {
                self.invalid(e, format!("`{text}` is not a finite number"));
                None
            }
        }
    }

    pub fn opt_quantity(&mut self, key: &str, dim: Dim) -> Option<f64> {
        let e = self.take(key)?;
        let (number, k) = self.unit_scale(&e, &e.value, dim)?;
        self.scaled(&e, &number, k)
    }

    pub fn quantity(&mut self, key: &str, dim: Dim, default: f64) -> f64 {
        self.opt_quantity(key, dim).unwrap_or(default)
    }

    /// Comma-separated list; a unit after the last element applies to all.
    pub fn list(&mut self, key: &str, dim: Dim, default: &[f64]) -> Vec<f64> {
        let Some(e) = self.take(key) else {
            return default.to_vec();
        };
        let Some((body, k)) = self.unit_scale(&e, &e.value, dim) else {
            return default.to_vec();
        };
        let mut out = Vec::new();
        for item in body.split(',') {
            match self.scaled(&e, item, k) {
                Some(v) => out.push(v),
                None => return default.to_vec(),
            }
        }
        out
    }

    /// Comma-separated `x:y` pairs of dimensionless numbers.
    pub fn pairs(&mut self, key: &str, default: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let Some(e) = self.take(key) else {
            return default.to_vec();
        };
        let mut out = Vec::new();
        for item in e.value.split(',') {
            let Some((a, b)) = item.split_once(':') else {
                self.invalid(&e, format!("`{}` is not an `x:y` pair", item.trim()));
                return default.to_vec();
            };
            match (self.number(&e, a), self.number(&e, b)) {
                (Some(a), Some(b)) => out.push((a, b)),
                _ => return default.to_vec(),
            }
        }
        out
    }

    pub fn opt_int(&mut self, key: &str) -> Option<u64> {
        let e = self.take(key)?;
        match e.value.parse::<u64>() {
            Ok(v) => Some(v),
            Err(_) => {
                let msg = format!("`{}` is not a non-negative integer", e.value);
                self.invalid(&e, msg);
                None
            }
        }
    }

    pub fn int(&mut self, key: &str, default: u64) -> u64 {
        self.opt_int(key).unwrap_or(default)
    }

    pub fn flag(&mut self, key: &str, default: bool) -> bool {
        let Some(e) = self.take(key) else {
            return default;
        };
        match e.value.as_str() {
            "true" | "yes" | "on" => true,
            "false" | "no" | "off" => false,
            other => {
                let msg = format!("`{other}` is not a boolean");
                self.invalid(&e, msg);
                default
            }
        }
    }

    /// Bare word, restricted to `allowed` when that is non-empty.
    pub fn opt_word(&mut self, key: &str, allowed: &[&str]) -> Option<String> {
        let e = self.take(key)?;
        if !allowed.is_empty() && !allowed.contains(&e.value.as_str()) {
            let msg = format!("`{}` is not one of {}", e.value, allowed.join(", "));
            self.invalid(&e, msg);
            return None;
        }
        Some(e.value)
    }

    pub fn words(&mut self, key: &str, allowed: &[&str], default: &[&str]) -> Vec<String> {
        let Some(e) = self.take(key) else {
            return default.iter().map(|s| s.to_string()).collect();
        };
        let mut out = Vec::new();
        for w in e.value.split(',').map(str::trim) {
            if !allowed.contains(&w) {
                let msg = format!("`{w}` is not one of {}", allowed.join(", "));
                self.invalid(&e, msg);
                return default.iter().map(|s| s.to_string()).collect();
            }
            out.push(w.to_string());
        }
        out
    }

    /// Like [`Fields::opt_word`] but a missing key is an error.
    pub fn required_word(&mut self, key: &str, allowed: &[&str]) -> Option<String> {
        if !self.has(key) {
            let (line, section) = (self.line, self.section.clone());
            self.push(
                line,
                ConfigErrorKind::MissingKey {
                    section,
                    key: key.into(),
                },
            );
            return None;
        }
        self.opt_word(key, allowed)
    }

    pub fn finish(self) {
        for e in self.entries {
            self.errors.push(ConfigError {
                line: e.line,
                kind: ConfigErrorKind::UnknownKey {
                    section: self.section.clone(),
                    key: e.key,
                },
            });
        }
    }
}
