use std::path::{Path, PathBuf};

use omkit::audio::PoolConfig;
use omkit::mllm::{LoraConfig, Stage};
use serde::{Deserialize, Serialize};

use crate::args::CommonArgs;
use crate::CliError;

/// Fields a `--config` file may set; each one replaces the matching flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    pool_factor: Option<usize>,
    lora: Option<LoraFile>,
    stage: Option<String>,
    endpoint: Option<String>,
    workers: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoraFile {
    r: Option<usize>,
    alpha: Option<f64>,
}

/// Fully resolved settings for one invocation; recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: u64,
    pub pool_factor: usize,
    pub lora: LoraConfig,
    pub stage: Stage,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl RunConfig {
    /// Merges flags with the config file, validates values and checks that
    /// every input exists and every output directory is writable-looking.
    pub fn resolve(
        subcommand: &str,
        common: &CommonArgs,
        default_pool: usize,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
    ) -> Result<Self, CliError> {
        let file = match &common.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
                serde_json::from_str::<ConfigFile>(&text)
                    .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?
            }
            None => ConfigFile::default(),
        };
        let defaults = LoraConfig::default();
        let lora = LoraConfig {
            r: file.lora.as_ref().and_then(|l| l.r).or(common.lora_r).unwrap_or(defaults.r),
            alpha: file.lora.as_ref().and_then(|l| l.alpha).or(common.lora_alpha).unwrap_or(defaults.alpha),
        };
        lora.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let pool_factor = file.pool_factor.or(common.pool_factor).unwrap_or(default_pool);
        PoolConfig::new(pool_factor).map_err(|e| CliError::Usage(e.to_string()))?;
        let stage = match file.stage.as_ref().or(common.stage.as_ref()) {
            Some(s) => s.parse::<Stage>().map_err(|e| CliError::Usage(e.to_string()))?,
            None => Stage::Stage1,
        };
        let workers = file.workers.or(common.workers);
        if workers == Some(0) {
            return Err(CliError::Usage("--workers must be positive".into()));
        }
        for input in &inputs {
            if !input.is_file() {
                return Err(CliError::Data(format!("input file not found: {}", input.display())));
            }
        }
        for output in &outputs {
            let parent = parent_dir(output);
            if !parent.is_dir() {
                return Err(CliError::Data(format!("output directory does not exist: {}", parent.display())));
            }
        }
        Ok(Self {
            subcommand: subcommand.to_string(),
            inputs,
            outputs,
            seed: file.seed.or(common.seed).unwrap_or(0),
            pool_factor,
            lora,
            stage,
            endpoint: file.endpoint.or_else(|| common.endpoint.clone()),
            workers,
        })
    }

    pub fn pool(&self) -> PoolConfig {
        PoolConfig::new(self.pool_factor).expect("validated in resolve")
    }
}

pub fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}
