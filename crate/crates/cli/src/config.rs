//! `key = value` settings files. Flags override the file; the file named by
//! `SYNTAX_SMC_CONFIG` is read when `--config` is absent.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{read, CliError, Result};

pub const CONFIG_ENV: &str = "SYNTAX_SMC_CONFIG";

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: HashMap<String, String>,
}

impl Config {
    /// Lines are `key = value`; `#` starts a comment and `[section]`
    /// headers prefix the keys below them with `section.`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = HashMap::new();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::input(format!("config line {}: expected key = value", n + 1)))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(CliError::input(format!("config line {}: empty key", n + 1)));
            }
            let key = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            values.insert(key, v.trim().to_string());
        }
        Ok(Config { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?)
    }

    /// The explicit file, else the one named in the environment, else empty.
    pub fn resolve(explicit: Option<&PathBuf>) -> Result<Self> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Config::default()),
            },
        }
    }

    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.values
            .get(&format!("{section}.{key}"))
            .or_else(|| self.values.get(key))
            .map(String::as_str)
    }

    /// Looks up `section.key`, then `key`.
    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::input(format!("config key {key}: {e}"))),
        }
    }

    /// Flag value, else config value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => v,
            None => self.get(section, key)?.unwrap_or(default),
        })
    }

    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => Some(v),
            None => self.get(section, key)?,
        })
    }
}
