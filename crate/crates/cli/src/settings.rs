//! Layered option resolution: defaults, then a config file, then flags.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// `on` / `off` switch value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Switch(pub bool);

impl FromStr for Switch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "on" | "true" | "1" => Ok(Switch(true)),
            "off" | "false" | "0" => Ok(Switch(false)),
            _ => Err(format!("expected 'on' or 'off', got '{s}'")),
        }
    }
}

impl Display for Switch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(if self.0 { "on" } else { "off" })
    }
}

/// `<p>x<q>` grid size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSize(pub usize, pub usize);

impl FromStr for GridSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || format!("expected '<width>x<height>', got '{s}'");
        let (a, b) = s.split_once('x').ok_or_else(err)?;
        let (p, q) = (a.parse().map_err(|_| err())?, b.parse().map_err(|_| err())?);
        if p == 0 || q == 0 {
            return Err(err());
        }
        Ok(GridSize(p, q))
    }
}

impl Display for GridSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

pub fn parse_config_text(text: &str, origin: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected 'key = value'", n + 1)))?;
        let key = k.trim().replace('_', "-");
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::Usage(format!("{origin}:{}: duplicate key '{key}'", n + 1)));
        }
    }
    Ok(map)
}

pub struct Resolver {
    file: BTreeMap<String, String>,
    origin: String,
    used: BTreeSet<String>,
    effective: Vec<(String, String, &'static str)>,
}

impl Resolver {
    pub fn new(config: Option<&Path>) -> Result<Self, CliError> {
        let (file, origin) = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                let origin = path.display().to_string();
                (parse_config_text(&text, &origin)?, origin)
            }
            None => (BTreeMap::new(), String::new()),
        };
        Ok(Self {
            file,
            origin,
            used: BTreeSet::new(),
            effective: Vec::new(),
        })
    }

    fn lookup<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<(T, &'static str)>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        if let Some(v) = flag {
            return Ok(Some((v, "flag")));
        }
        match self.file.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map(|v| Some((v, "config")))
                .map_err(|e| CliError::Usage(format!("{}: bad value for '{key}': {e}", self.origin))),
            None => Ok(None),
        }
    }

    /// Flag value if given, else config-file value, else `default`.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let (value, source) = self.lookup(key, flag)?.unwrap_or((default, "default"));
        self.effective.push((key.to_string(), value.to_string(), source));
        Ok(value)
    }

    /// Like [`Resolver::get`] for options without a default.
    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let (value, source) = self
            .lookup(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required option --{key}")))?;
        self.effective.push((key.to_string(), value.to_string(), source));
        Ok(value)
    }

    /// Rejects config keys that no option consumed and logs every effective
    /// value.
    pub fn finish(&self, command: &str) -> Result<(), CliError> {
        let unknown: Vec<&String> = self.file.keys().filter(|k| !self.used.contains(*k)).collect();
        if !unknown.is_empty() {
            return Err(CliError::Usage(format!(
                "{}: unknown keys for '{command}': {}",
                self.origin,
                unknown.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", ")
            )));
        }
        for (k, v, source) in &self.effective {
            log::info!("{command}: {k} = {v} ({source})");
        }
        Ok(())
    }
}
