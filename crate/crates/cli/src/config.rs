//! INI-style `key = value` configuration with per-key line numbers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config error at line {l}: {}", self.msg),
            None => write!(f, "config error: {}", self.msg),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: Option<usize>, msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, msg: msg.into() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: BTreeMap<String, Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => match e.value.parse::<T>() {
                Ok(v) => Ok(Some(v)),
                Err(_) => err(Some(e.line), format!("[{}] {key} = {:?} is not a valid value", self.name, e.value)),
            },
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        match self.parse(key)? {
            Some(v) => Ok(v),
            None => err(Some(self.line), format!("[{}] is missing required key {key}", self.name)),
        }
    }

    pub fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    /// Rejects any key outside `allowed`.
    pub fn only(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for (k, e) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return err(Some(e.line), format!("unknown key {k} in [{}]; allowed: {}", self.name, allowed.join(", ")));
            }
        }
        Ok(())
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(self.line, |e| e.line)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ini {
    pub sections: Vec<Section>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut ini = Ini::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.split(['#', ';']).next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return err(Some(line), format!("malformed section header {s:?}"));
                };
                let name = name.trim().to_string();
                if name.is_empty() {
                    return err(Some(line), "empty section name");
                }
                if ini.sections.iter().any(|x| x.name == name) {
                    return err(Some(line), format!("duplicate section [{name}]"));
                }
                ini.sections.push(Section { name, line, entries: BTreeMap::new() });
                continue;
            }
            let Some((k, v)) = s.split_once('=') else {
                return err(Some(line), format!("expected key = value, got {s:?}"));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return err(Some(line), "empty key");
            }
            let Some(sec) = ini.sections.last_mut() else {
                return err(Some(line), format!("key {k} appears before any section"));
            };
            if let Some(prev) = sec.entries.get(k) {
                return err(Some(line), format!("duplicate key {k} (first at line {})", prev.line));
            }
            sec.entries.insert(k.to_string(), Entry { value: v.to_string(), line });
        }
        Ok(ini)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn require_section(&self, name: &str) -> Result<&Section, ConfigError> {
        self.section(name).ok_or_else(|| ConfigError { line: None, msg: format!("missing section [{name}]") })
    }

    /// Canonical text form, used for the meta file.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for sec in &self.sections {
            s.push_str(&format!("[{}]\n", sec.name));
            for (k, e) in &sec.entries {
                s.push_str(&format!("{k} = {}\n", e.value));
            }
        }
        s
    }
}
