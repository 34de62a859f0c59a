//! Flag / config-file / default resolution. Every resolved value is recorded
//! so the manifest can echo the effective configuration.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use vocab_mixin::{Error, Result};

pub struct Resolver {
    file: Map<String, Value>,
    pub resolved: Map<String, Value>,
}

impl Resolver {
    pub fn new(config: Option<&Path>) -> Result<Self> {
        let file = match config {
            None => Map::new(),
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| Error::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
                match serde_json::from_str(&text)? {
                    Value::Object(m) => m.into_iter().map(|(k, v)| (k.replace('-', "_"), v)).collect(),
                    _ => {
                        return Err(Error::Validation(format!(
                            "{}: config must be a JSON object",
                            path.display()
                        )))
                    }
                }
            }
        };
        Ok(Resolver {
            file,
            resolved: Map::new(),
        })
    }

    fn take_file<T: DeserializeOwned>(&mut self, key: &str) -> Result<Option<T>> {
        match self.file.remove(key) {
            None => Ok(None),
            Some(v) => serde_json::from_value(v)
                .map(Some)
                .map_err(|e| Error::Validation(format!("config key {key}: {e}"))),
        }
    }

    pub fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).expect("config values serialize");
        self.resolved.insert(key.to_string(), v);
    }

    /// Flag, else config file, else `default`.
    pub fn get<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let from_file = self.take_file(key)?;
        let v = flag.or(from_file).unwrap_or(default);
        self.record(key, &v);
        Ok(v)
    }

    pub fn optional<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        let from_file = self.take_file(key)?;
        let v = flag.or(from_file);
        if let Some(x) = &v {
            self.record(key, x);
        }
        Ok(v)
    }

    pub fn required<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>) -> Result<T> {
        self.optional(key, flag)?
            .ok_or_else(|| Error::Parameter(format!("--{} is required", key.replace('_', "-"))))
    }

    /// Like [`Resolver::get`] for values parsed from strings.
    pub fn parsed<T>(&mut self, key: &str, flag: Option<String>, default: &str) -> Result<T>
    where
        T: std::str::FromStr<Err = Error>,
    {
        let s: String = self.get(key, flag, default.to_string())?;
        s.parse()
    }

    /// Config keys nobody asked for are almost always typos.
    pub fn finish(&self) -> Result<()> {
        match self.file.keys().next() {
            None => Ok(()),
            Some(k) => Err(Error::Validation(format!("unknown config key {k:?}"))),
        }
    }
}
