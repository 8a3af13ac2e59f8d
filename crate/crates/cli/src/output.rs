use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{parent_dir, RunConfig};
use crate::CliError;

/// Writes via a temp file in the target directory and renames it into place,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let err = |e: std::io::Error| CliError::Data(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(parent_dir(path)).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

/// Versions and settings that every report carries.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub omkit_version: &'static str,
    pub tokenizer_version: &'static str,
    pub meteor_variant: &'static str,
    pub pool_factor: usize,
    pub lora: omkit::mllm::LoraConfig,
    pub seed: u64,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Self {
            omkit_version: omkit::VERSION,
            tokenizer_version: omkit::metrics::TOKENIZER_VERSION,
            meteor_variant: omkit::metrics::METEOR_VARIANT,
            pool_factor: cfg.pool_factor,
            lora: cfg.lora,
            seed: cfg.seed,
        }
    }
}

#[derive(Serialize)]
struct OutputEntry {
    path: PathBuf,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    omkit_version: &'static str,
    config: &'a RunConfig,
    seed: u64,
    outputs: Vec<OutputEntry>,
    created_unix_secs: u64,
}

/// Default manifest location: next to the first output, or the explicit
/// `--manifest` path, or the working directory.
pub fn manifest_path(cfg: &RunConfig, explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match cfg.outputs.first() {
        Some(out) => {
            let mut s = out.as_os_str().to_owned();
            s.push(".manifest.json");
            s.into()
        }
        None => PathBuf::from(format!("omkit-{}.manifest.json", cfg.subcommand)),
    }
}

pub fn write_manifest(cfg: &RunConfig, explicit: Option<&Path>) -> Result<(), CliError> {
    let outputs = cfg
        .outputs
        .iter()
        .filter(|p| p.is_file())
        .map(|p| {
            let bytes = std::fs::read(p).map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display())))?;
            let sha256 = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
            Ok(OutputEntry { path: p.clone(), sha256 })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let created_unix_secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let manifest = Manifest { omkit_version: omkit::VERSION, config: cfg, seed: cfg.seed, outputs, created_unix_secs };
    write_atomic(&manifest_path(cfg, explicit), to_pretty_json(&manifest).as_bytes())
}
