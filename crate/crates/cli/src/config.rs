//! TOML configuration for training runs and the HTTP service.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use metaflow_core::flow::SamplingParams;
use metaflow_core::model::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Classify};

pub const CONFIG_ENV: &str = "METAFLOW_CONFIG";

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).data_ctx(format!("reading {}", path.display()))?;
    let de = toml::Deserializer::parse(&text).data_ctx(format!("parsing {}", path.display()))?;
    serde_path_to_error::deserialize(de).data_ctx(format!("parsing {}", path.display()))
}

/// `model.toml`: architecture, optimizer and logging cadence.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub model: ModelConfig,
    #[serde(default = "TrainConfig::reference")]
    pub train: TrainConfig,
    /// Seed for the example shuffle.
    #[serde(default)]
    pub sampler_seed: u64,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
}

fn default_log_every() -> u64 {
    100
}

impl TrainFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let f: Self = read_toml(path)?;
        f.model.validate().data_ctx(format!("{}: [model]", path.display()))?;
        f.train.validate().data_ctx(format!("{}: [train]", path.display()))?;
        if f.log_every == 0 {
            return Err(CliError::data(anyhow::anyhow!("{}: log_every must be at least 1", path.display())));
        }
        Ok(f)
    }
}

/// `service.toml`. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    pub checkpoint: PathBuf,
    /// `encoder.json`.
    pub vocab: PathBuf,
    /// `vocab.bpe`.
    pub merges: PathBuf,
    #[serde(default)]
    pub sampling: SamplingParams,
    /// How long a request may wait for a generation slot.
    #[serde(default = "default_timeout_ms")]
    pub request_timeout_ms: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    /// Optional external encoder for the similarity score.
    #[serde(default)]
    pub embedding_url: Option<String>,
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_concurrency() -> usize {
    2
}

impl ServiceConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut cfg: Self = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.checkpoint, &mut cfg.vocab, &mut cfg.merges] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// `explicit`, else `$METAFLOW_CONFIG`.
    pub fn locate(explicit: Option<PathBuf>) -> CliResult<PathBuf> {
        explicit
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
            .ok_or_else(|| CliError::Usage(format!("no service config: pass --config or set {CONFIG_ENV}")))
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.max_concurrency == 0 {
            return Err(CliError::data(anyhow::anyhow!("max_concurrency must be at least 1")));
        }
        self.sampling.validate().data_ctx("[sampling]")?;
        Ok(())
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_millis(self.request_timeout_ms)
    }
}
