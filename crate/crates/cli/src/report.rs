//! Run reports: derived quantities with units plus a manifest of the
//! files a run wrote.
//!
//! ```text
//! scenario = pi_sweep
//! config_sha256 = 3f1c...
//! seed = 7
//!
//! [quantities]
//! threshold_forward_bare = 2.6750000000000000e-2 A (26.75 mA)
//! fit_threshold_forward_bare = 2.6750925925925926e-2 A +- 2.67e-7 (26.750926 mA)
//!
//! [warnings]
//! ...
//!
//! [files]
//! pi_bare.csv = 530213 bytes sha256 9a0e...
//! ```
//!
//! Values are SI; the parenthesized figure repeats them in the customary
//! laboratory unit and is ignored when a report is read back.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::output::ManifestEntry;

#[derive(Debug, Clone, PartialEq)]
pub struct Quantity {
    pub name: String,
    /// SI value.
    pub value: f64,
    /// SI unit symbol; `1` for a plain number, `frac` for a fraction
    /// shown in percent.
    pub unit: String,
    pub stderr: Option<f64>,
}

/// Customary unit and its scale from SI, for display.
pub fn conventional(unit: &str) -> Option<(&'static str, f64)> {
    Some(match unit {
        "A" => ("mA", 1e3),
        "W" => ("uW", 1e6),
        "T" => ("nT", 1e9),
        "T/rtHz" => ("nT/rtHz", 1e9),
        "V/rtHz" => ("nV/rtHz", 1e9),
        "Hz" => ("MHz", 1e-6),
        "V/Hz" => ("V/MHz", 1e6),
        "W/A" => ("mW/mA", 1.0),
        "frac" => ("%", 100.0),
        "s" => ("ns", 1e9),
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub scenario: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub quantities: Vec<Quantity>,
    pub warnings: Vec<String>,
    pub files: Vec<ManifestEntry>,
}

impl RunReport {
    pub fn new(scenario: &str, config_hash: &str, seed: Option<u64>) -> Self {
        Self {
            scenario: scenario.into(),
            config_hash: config_hash.into(),
            seed,
            ..Default::default()
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64, unit: &str) {
        self.quantities.push(Quantity {
            name: name.into(),
            value,
            unit: unit.into(),
            stderr: None,
        });
    }

    pub fn push_err(&mut self, name: impl Into<String>, value: f64, stderr: f64, unit: &str) {
        self.quantities.push(Quantity {
            name: name.into(),
            value,
            unit: unit.into(),
            stderr: Some(stderr),
        });
    }

    pub fn quantity(&self, name: &str) -> Option<&Quantity> {
        self.quantities.iter().find(|q| q.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.quantity(name).map(|q| q.value)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario = {}", self.scenario);
        let _ = writeln!(s, "config_sha256 = {}", self.config_hash);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        s.push_str("\n[quantities]\n");
        for q in &self.quantities {
            let _ = write!(s, "{} = {:.16e} {}", q.name, q.value, q.unit);
            if let Some(e) = q.stderr {
                let _ = write!(s, " +- {e:.3e}");
            }
            if let Some((unit, k)) = conventional(&q.unit) {
                let _ = write!(s, " ({} {unit}", sig(q.value * k));
                if let Some(e) = q.stderr {
                    let _ = write!(s, " +- {}", sig(e * k));
                }
                s.push(')');
            }
            s.push('\n');
        }
        if !self.warnings.is_empty() {
            s.push_str("\n[warnings]\n");
            for w in &self.warnings {
                let _ = writeln!(s, "- {}", w.replace('\n', " "));
            }
        }
        s.push_str("\n[files]\n");
        for f in &self.files {
            let _ = writeln!(s, "{} = {} bytes sha256 {}", f.name, f.bytes, f.sha256);
        }
        s
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let bad = |line: usize, msg: &str| CliError::Report(format!("report line {line}: {msg}"));
        let mut r = RunReport::default();
        let mut section = "";
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() {
                continue;
            }
            if let Some(name) = l.strip_prefix('[').and_then(|x| x.strip_suffix(']')) {
                section = match name {
                    "quantities" => "quantities",
                    "warnings" => "warnings",
                    "files" => "files",
                    _ => return Err(bad(line, "unknown section")),
                };
                continue;
            }
            if section == "warnings" {
                let w = l.strip_prefix("- ").ok_or_else(|| bad(line, "warning must start with `- `"))?;
                r.warnings.push(w.to_string());
                continue;
            }
            let (key, value) = l.split_once(" = ").ok_or_else(|| bad(line, "expected `key = value`"))?;
            match section {
                "" => match key {
                    "scenario" => r.scenario = value.into(),
                    "config_sha256" => r.config_hash = value.into(),
                    "seed" => r.seed = Some(value.parse().map_err(|_| bad(line, "bad seed"))?),
                    _ => return Err(bad(line, "unknown header key")),
                },
                "quantities" => {
                    let body = value.split(" (").next().unwrap_or(value);
                    let mut tok = body.split_whitespace();
                    let v = tok.next().and_then(|t| t.parse::<f64>().ok());
                    let unit = tok.next();
                    let stderr = match (tok.next(), tok.next()) {
                        (Some("+-"), Some(e)) => Some(e.parse::<f64>().map_err(|_| bad(line, "bad stderr"))?),
                        (None, None) => None,
                        _ => return Err(bad(line, "trailing tokens")),
                    };
                    let (Some(v), Some(unit)) = (v, unit) else {
                        return Err(bad(line, "expected `value unit`"));
                    };
                    r.quantities.push(Quantity {
                        name: key.into(),
                        value: v,
                        unit: unit.into(),
                        stderr,
                    });
                }
                _ => {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    let [bytes, "bytes", "sha256", hash] = parts.as_slice() else {
                        return Err(bad(line, "expected `<n> bytes sha256 <hex>`"));
                    };
                    r.files.push(ManifestEntry {
                        name: key.into(),
                        bytes: bytes.parse().map_err(|_| bad(line, "bad byte count"))?,
                        sha256: (*hash).into(),
                    });
                }
            }
        }
        if r.scenario.is_empty() || r.config_hash.is_empty() {
            return Err(CliError::Report("report lacks scenario or config hash".into()));
        }
        Ok(r)
    }

    /// Checks every manifest entry against the files under `dir`.
    pub fn verify_files(&self, dir: &Path) -> CliResult<()> {
        for f in &self.files {
            if !crate::output::is_plain_file_name(&f.name) {
                return Err(CliError::Escape(f.name.clone()));
            }
            let path = dir.join(&f.name);
            let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
            let hash = hex::encode(Sha256::digest(&bytes));
            if bytes.len() as u64 != f.bytes || hash != f.sha256 {
                return Err(CliError::Report(format!("{} does not match the manifest", path.display())));
            }
        }
        Ok(())
    }
}

/// Eight significant digits, trailing zeros trimmed.
fn sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-4..=8).contains(&mag) {
        return format!("{v:.7e}");
    }
    let decimals = (7 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        let mut r = RunReport::new("pi_sweep", &"ab".repeat(32), Some(7));
        r.push("threshold_forward_bare", 26.75e-3, "A");
        r.push_err("splitting", 4.9e6, 1.2e4, "Hz");
        r.push("sensitivity", 7.6e-9, "T/rtHz");
        r.push("count", 3.0, "segments");
        r.warnings.push("sweep misses the reverse threshold".into());
        r.files.push(ManifestEntry {
            name: "a.csv".into(),
            bytes: 10,
            sha256: "cd".repeat(32),
        });
        r
    }

    #[test]
    fn text_round_trip() {
        let r = sample();
        let text = r.to_text();
        assert!(text.contains("(26.75 mA)"), "{text}");
        assert!(text.contains("(7.6 nT/rtHz)"), "{text}");
        assert!(text.contains("(4.9 MHz +- 0.012)"), "{text}");
        let back = RunReport::parse(&text).unwrap();
        assert_eq!(back.quantities[0], r.quantities[0]);
        assert_eq!(back.value("sensitivity"), Some(7.6e-9));
        assert_eq!(back.files, r.files);
        assert_eq!(back.warnings, r.warnings);
        assert_eq!(back.seed, Some(7));
    }

    #[test]
    fn significant_digits() {
        assert_eq!(sig(26.75), "26.75");
        assert_eq!(sig(0.00054), "0.00054");
        assert_eq!(sig(28.259999999999998), "28.26");
        assert_eq!(sig(1.5e-9), "1.5000000e-9");
    }

    #[test]
    fn manifest_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = sample();
        std::fs::write(dir.path().join("a.csv"), b"0123456789").unwrap();
        assert!(r.verify_files(dir.path()).is_err());
        r.files[0].sha256 = hex::encode(Sha256::digest(b"0123456789"));
        r.verify_files(dir.path()).unwrap();
    }
}
