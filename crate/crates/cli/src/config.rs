//! TOML run configuration. Every field is optional; command-line flags take
//! precedence over the file, and the file over built-in defaults.

use std::path::{Path, PathBuf};

use brood::metrics::EdgeMode;
use brood::synth::{ErrorModel, GraphModel};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    /// `pc` or `file:<path>`.
    pub init: Option<String>,
    pub chains: Option<usize>,
    pub mode: Option<EdgeMode>,
    pub synth: SynthSection,
    pub chain: ChainSection,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub p: Option<usize>,
    pub n: Option<usize>,
    pub graph: Option<GraphChoice>,
    pub errors: Option<ErrorModel>,
    pub weight_low: Option<f64>,
    pub weight_high: Option<f64>,
}

/// A named model (`er`, `sbm`, `hsbm`) at default settings, or a full table.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphChoice {
    Named(String),
    Model(GraphModel),
}

impl GraphChoice {
    pub fn resolve(&self, p: usize) -> Result<GraphModel, CliError> {
        match self {
            GraphChoice::Named(name) => GraphModel::named(name, p)
                .ok_or_else(|| CliError::Validation(format!("unknown graph model `{name}`"))),
            GraphChoice::Model(m) => Ok(m.clone()),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub ell: Option<f64>,
    pub c_star: Option<f64>,
    pub cap: Option<usize>,
    pub steps: Option<usize>,
    pub warmup: Option<usize>,
    pub thin: Option<usize>,
    pub plus_one: Option<bool>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("bad config {}: {e}", path.display())))
    }
}

/// Where the initial search space comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Init {
    Pc,
    File(PathBuf),
}

impl std::str::FromStr for Init {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "pc" {
            Ok(Init::Pc)
        } else if let Some(path) = s.strip_prefix("file:") {
            Ok(Init::File(PathBuf::from(path)))
        } else {
            Err(format!("expected `pc` or `file:<path>`, got `{s}`"))
        }
    }
}

impl std::fmt::Display for Init {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Init::Pc => f.write_str("pc"),
            Init::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}
