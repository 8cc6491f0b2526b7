//! `key = value` configuration file with `#` comments.
//!
//! Effective parameter precedence everywhere is: command-line flag, then
//! config file, then built-in default.

use crate::CliError;
use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

/// Keys the config file may define.
pub const KNOWN_KEYS: &[&str] = &[
    "workers",
    "gen.speakers",
    "gen.phrases",
    "gen.utts",
    "gen.dim",
    "gen.noise",
    "gen.confusion",
    "gen.seed",
    "gen.format",
    "enroll.relaxed",
    "enroll.out-format",
    "asnorm.top-n",
    "asnorm.epsilon-sigma",
    "gate.floor",
    "gate.min-confidence",
    "eval.p-target",
    "eval.c-miss",
    "eval.c-fa",
    "eval.subset",
    "eval.eer-method",
    "losscheck.instances",
    "losscheck.seed",
    "losscheck.step",
    "losscheck.tolerance",
];

#[derive(Debug, Default)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "{}: line {}: expected `key = value`",
                    path.display(),
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "{}: line {}: unknown config key {key:?}",
                    path.display(),
                    lineno + 1
                )));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::Usage(format!("config key {key:?}: cannot parse value {raw:?}"))
            }),
        }
    }
}

/// flag > config > default.
pub fn resolve<T: FromStr>(
    flag: Option<T>,
    config: &FileConfig,
    key: &str,
    default: T,
) -> Result<T, CliError> {
    match flag {
        Some(v) => Ok(v),
        None => Ok(config.get(key)?.unwrap_or(default)),
    }
}

/// flag > config > None.
pub fn resolve_opt<T: FromStr>(
    flag: Option<T>,
    config: &FileConfig,
    key: &str,
) -> Result<Option<T>, CliError> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => config.get(key),
    }
}
