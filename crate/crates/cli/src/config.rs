//! Plain-text experiment configuration: `key=value` lines with `#` comments,
//! flag overrides on top, unknown keys rejected. The resolved config is
//! echoed into every run's output directory and hashed into CSV headers, so
//! experiments stay diff-able.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    entries: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(format!("line {}: expected key=value", lineno + 1));
            };
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(ExperimentConfig { entries })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text =
            std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn set_if_absent(&mut self, key: &str, value: impl ToString) {
        self.entries
            .entry(key.to_string())
            .or_insert_with(|| value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, String> {
        self.get(key).ok_or_else(|| format!("missing key `{key}`"))
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T, String> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| format!("key `{key}`: cannot parse `{raw}`"))
    }

    pub fn get_parsed_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| format!("key `{key}`: cannot parse `{raw}`")),
        }
    }

    /// Error when a key outside `known` is present.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<(), String> {
        for k in self.entries.keys() {
            if !known.contains(&k.as_str()) {
                return Err(format!(
                    "unknown config key `{k}` (accepted: {})",
                    known.join(", ")
                ));
            }
        }
        Ok(())
    }

    /// Canonical printed form; `parse(print(cfg)) == cfg`.
    pub fn print(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// FNV-1a 64-bit hash of the canonical form, hex-encoded. The output
    /// location (`out`) is excluded: it names where results go, not what the
    /// experiment is, and identical experiments must hash identically
    /// wherever they are written.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (k, v) in &self.entries {
            if k == "out" {
                continue;
            }
            for b in format!("{k}={v}\n").as_bytes() {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }

    /// Write the canonical form (with its hash as a comment) into `dir`.
    pub fn echo_into(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let body = format!("# hash={}\n{}", self.hash(), self.print());
        std::fs::write(dir.join("config.resolved"), body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let mut cfg = ExperimentConfig::new();
        cfg.set("n", 20);
        cfg.set("sigma", 1.5);
        cfg.set("data", "runs/ds.txt");
        let printed = cfg.print();
        let back = ExperimentConfig::parse(&printed).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn comments_and_unknown_keys() {
        let cfg = ExperimentConfig::parse("# comment\nn=3\n\nd = 5\n").unwrap();
        assert_eq!(cfg.get("d"), Some("5"));
        assert!(cfg.reject_unknown(&["n", "d"]).is_ok());
        assert!(cfg.reject_unknown(&["n"]).is_err());
        assert!(ExperimentConfig::parse("oops").is_err());
    }
}
