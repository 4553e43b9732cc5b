//! Effective configurations of the commands and their file round trip.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dynsys::PendulumParams;
use crate::error::{Error, Result};
use crate::io::Metadata;
use crate::limitlaw::{LimitMode, DEFAULT_DRAWS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    Ma3,
    Arma53,
    Pendulum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum KernelSourceKind {
    Model,
    Hac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    Ma3,
    Arma53,
    Pendulum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ModelName,
    pub n: usize,
    pub traj: usize,
    pub mean: f64,
    /// `None` selects the model default (0, 1000, or 50,000 steps).
    pub burn_in: Option<usize>,
    pub energy: f64,
    pub steps: usize,
    pub dt: f64,
    pub params: PendulumParams,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            model: ModelName::Ma3,
            n: 1000,
            traj: 100,
            mean: 0.0,
            burn_in: None,
            energy: 70.0,
            steps: 100_000,
            dt: 1e-3,
            params: PendulumParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub source: KernelSourceKind,
    pub model: ModelName,
    pub mean: f64,
    pub lags: Option<usize>,
    pub grid_size: usize,
    pub tail_trim: f64,
    pub burn_in: usize,
    pub data: Vec<PathBuf>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        let grid = crate::kernels::GridSpec::default();
        Self {
            source: KernelSourceKind::Model,
            model: ModelName::Ma3,
            mean: 0.0,
            lags: None,
            grid_size: grid.size,
            tail_trim: grid.tail_trim,
            burn_in: 0,
            data: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitConfig {
    pub kernel: Option<PathBuf>,
    pub mode: LimitMode,
    pub draws: usize,
    pub seed: u64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self {
            kernel: None,
            mode: LimitMode::Pairwise,
            draws: DEFAULT_DRAWS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub mode: LimitMode,
    pub data: Vec<PathBuf>,
    pub kernel: Option<PathBuf>,
    pub ensemble: Option<PathBuf>,
    pub pairs: Vec<(usize, usize)>,
    pub target: Option<String>,
    pub alpha: f64,
    pub draws: usize,
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            mode: LimitMode::Pairwise,
            data: Vec::new(),
            kernel: None,
            ensemble: None,
            pairs: vec![(0, 1)],
            target: None,
            alpha: 0.05,
            draws: DEFAULT_DRAWS,
            seed: 0,
        }
    }
}

fn config_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{}: {e}", path.display()))
}

/// Reads a configuration from a JSON document, a JSON result document with
/// `command` and `config` keys, or a CSV output with `# config=` metadata.
pub fn load<T: DeserializeOwned>(path: &Path, command: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| config_error(path, e))?;
    let (found, body) = if text.trim_start().starts_with('{') {
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| config_error(path, e))?;
        match (value.get("command"), value.get("config")) {
            (Some(c), Some(cfg)) => (c.as_str().map(str::to_owned), cfg.clone()),
            _ => (None, value),
        }
    } else {
        let mut command_line = None;
        let mut config_line = None;
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let header = line[1..].trim_start();
            if let Some(v) = header.strip_prefix("command=") {
                command_line = Some(v.to_owned());
            } else if let Some(v) = header.strip_prefix("config=") {
                config_line = Some(v.to_owned());
            }
        }
        let cfg = config_line.ok_or_else(|| config_error(path, "no embedded '# config=' header"))?;
        let value = serde_json::from_str(&cfg).map_err(|e| config_error(path, e))?;
        (command_line, value)
    };
    if let Some(found) = found {
        if found != command {
            return Err(config_error(path, format!("configuration is for '{found}', not '{command}'")));
        }
    }
    serde_json::from_value(body).map_err(|e| config_error(path, e))
}

/// `command` and `config` headers for CSV outputs.
pub fn header<T: Serialize>(command: &str, cfg: &T) -> Result<Metadata> {
    let json = serde_json::to_string(cfg).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(Metadata::new().with("command", command).with("config", json))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_all_three_layouts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = LimitConfig {
            draws: 1234,
            ..LimitConfig::default()
        };
        let plain = dir.path().join("a.json");
        fs::write(&plain, serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(load::<LimitConfig>(&plain, "limit").unwrap(), cfg);

        let doc = dir.path().join("b.json");
        let wrapped = serde_json::json!({"command": "limit", "config": cfg});
        fs::write(&doc, wrapped.to_string()).unwrap();
        assert_eq!(load::<LimitConfig>(&doc, "limit").unwrap(), cfg);
        assert!(load::<LimitConfig>(&doc, "test").is_err());

        let csv = dir.path().join("c.csv");
        let meta = header("limit", &cfg).unwrap();
        crate::io::write_table_file(&csv, &meta, &[vec![1.0]]).unwrap();
        assert_eq!(load::<LimitConfig>(&csv, "limit").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        fs::write(&p, r#"{"kernel":null,"mode":"pairwise","draws":5,"seed":1,"extra":2}"#).unwrap();
        assert!(matches!(load::<LimitConfig>(&p, "limit"), Err(Error::Parse(_))));
    }
}
