use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use vocab_mixin::digest::sha256_hex;
use vocab_mixin::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Map<String, Value>,
    /// Input path -> content digest.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<OutputFile>,
    pub version: String,
    pub duration_secs: f64,
}

/// Collects what a run read and wrote.
pub struct Run {
    pub command: String,
    started: Instant,
    inputs: BTreeMap<String, String>,
    outputs: Vec<OutputFile>,
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl Run {
    pub fn new(command: &str) -> Self {
        Run {
            command: command.to_string(),
            started: Instant::now(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = read_bytes(path)?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn write(&mut self, path: &Path, contents: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        fs::write(path, contents).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.outputs.push(OutputFile {
            path: path.to_path_buf(),
            sha256: sha256_hex(contents),
        });
        Ok(())
    }

    /// Writes `<out>.manifest.json`, or `./<command>.manifest.json` when the
    /// run had no `--out`.
    pub fn finish(self, out: Option<&Path>, config: Map<String, Value>) -> Result<PathBuf> {
        let path = match out {
            Some(p) => {
                let mut s = p.as_os_str().to_owned();
                s.push(".manifest.json");
                PathBuf::from(s)
            }
            None => PathBuf::from(format!("{}.manifest.json", self.command)),
        };
        let manifest = RunManifest {
            command: self.command,
            argv: std::env::args().collect(),
            config,
            inputs: self.inputs,
            outputs: self.outputs,
            version: env!("CARGO_PKG_VERSION").to_string(),
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text + "\n").map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}
