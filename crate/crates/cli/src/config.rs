//! Flat `key = value` configuration files.
//!
//! One setting per line, `#` starts a comment, keys use the long flag names
//! with `-` or `_` (`face_side = 256`). Values may be quoted. Command-line
//! flags override file values, which override built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

pub const KNOWN_KEYS: &[&str] = &[
    "input", "output", "from", "to", "n", "face_side", "erp_width", "width", "height", "yaw", "pitch", "roll",
    "hfov", "vfov", "fuse", "six", "threads", "psnr_min", "report", "fps",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = k.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::config(format!("line {}: unknown key {key:?}", lineno + 1)));
            }
            let v = v.trim();
            let v = v
                .strip_prefix('"')
                .and_then(|s| s.strip_suffix('"'))
                .unwrap_or(v);
            if values.insert(key.clone(), v.to_string()).is_some() {
                return Err(CliError::config(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| CliError::config(format!("config key {key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>, CliError> {
        self.raw(key)
            .map(|v| match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                _ => Err(CliError::config(format!("config key {key}: expected a boolean, got {v:?}"))),
            })
            .transpose()
    }
}

// `#` inside quotes is kept.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

/// `flag`, else the config value, else `default`.
pub fn pick<T: FromStr>(flag: Option<T>, cfg: &ConfigFile, key: &str) -> Result<Option<T>, CliError> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => cfg.get(key),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_quotes() {
        let cfg = ConfigFile::parse(
            "# job\nn = 128\nface-side=64  # trailing\noutput = \"out#1.png\"\n\nfuse = yes\n",
        )
        .unwrap();
        assert_eq!(cfg.get::<usize>("n").unwrap(), Some(128));
        assert_eq!(cfg.get::<usize>("face_side").unwrap(), Some(64));
        assert_eq!(cfg.raw("output"), Some("out#1.png"));
        assert_eq!(cfg.get_bool("fuse").unwrap(), Some(true));
        assert_eq!(cfg.get::<f64>("yaw").unwrap(), None);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(ConfigFile::parse("n 128").is_err());
        assert!(ConfigFile::parse("colour = red").is_err());
        assert!(ConfigFile::parse("n = 1\nn = 2").is_err());
        let cfg = ConfigFile::parse("n = many").unwrap();
        assert_eq!(cfg.get::<usize>("n").unwrap_err().code, crate::EXIT_CONFIG);
    }

    #[test]
    fn flags_override_file() {
        let cfg = ConfigFile::parse("n = 128").unwrap();
        assert_eq!(pick(Some(64usize), &cfg, "n").unwrap(), Some(64));
        assert_eq!(pick(None::<usize>, &cfg, "n").unwrap(), Some(128));
        assert_eq!(pick(None::<usize>, &ConfigFile::default(), "n").unwrap(), None);
    }
}
