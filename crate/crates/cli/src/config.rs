use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use hofscan_core::features::{EmbeddingProvider, FileProvider, MockProvider};
use hofscan_core::lexicon::{load_lexicon, Lexicon};
use hofscan_core::model::ModelConfig;
use hofscan_core::pipeline::TrainingConfig;

use crate::CliError;

/// Contents of a `--config` TOML file. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub paths: PathsConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provider: Option<ProviderSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.message())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}

/// `emb1:<path>` or `mock:<dim>:<seed>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    Emb1(PathBuf),
    Mock { dim: usize, seed: u64 },
}

impl FromStr for ProviderSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad provider {s:?}; expected emb1:<path> or mock:<dim>:<seed>");
        match s.split_once(':') {
            Some(("emb1", path)) if !path.is_empty() => Ok(ProviderSpec::Emb1(PathBuf::from(path))),
            Some(("mock", rest)) => {
                let (dim, seed) = rest.split_once(':').ok_or_else(bad)?;
                let dim: usize = dim.parse().map_err(|_| bad())?;
                if dim == 0 {
                    return Err(bad());
                }
                Ok(ProviderSpec::Mock {
                    dim,
                    seed: seed.parse().map_err(|_| bad())?,
                })
            }
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for ProviderSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProviderSpec::Emb1(p) => write!(f, "emb1:{}", p.display()),
            ProviderSpec::Mock { dim, seed } => write!(f, "mock:{dim}:{seed}"),
        }
    }
}

impl Serialize for ProviderSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ProviderSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl ProviderSpec {
    pub fn open(&self) -> Result<Arc<dyn EmbeddingProvider>, CliError> {
        Ok(match self {
            ProviderSpec::Emb1(path) => Arc::new(FileProvider::open(path).map_err(|e| CliError::Data(e.to_string()))?),
            ProviderSpec::Mock { dim, seed } => Arc::new(MockProvider::new(*dim, *seed).named(format!("mock{dim}"))),
        })
    }
}

pub fn open_lexicon(path: &Path) -> Result<Arc<Lexicon>, CliError> {
    let loaded = load_lexicon(path).map_err(|e| CliError::Data(e.to_string()))?;
    if loaded.duplicates > 0 {
        eprintln!("warning: {}: {} duplicate lexicon line(s) ignored", path.display(), loaded.duplicates);
    }
    if loaded.invalid > 0 {
        eprintln!("warning: {}: {} lexicon line(s) normalized to nothing", path.display(), loaded.invalid);
    }
    Ok(Arc::new(loaded.lexicon))
}
