//! Run configuration snapshots, config hashing and output files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use phishguard_core::agents::{ChatBackendConfig, ExplanationMode};
use phishguard_core::email::CorpusFormat;
use phishguard_core::fusion::{PpoConfig, WeightVector};
use phishguard_core::Label;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Learned,
    Static([f64; 3]),
}

impl FromStr for FusionMode {
    type Err = String;

    /// `learned`, `static` (default weights) or `static:a,b,c`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("learned") {
            return Ok(FusionMode::Learned);
        }
        if s.eq_ignore_ascii_case("static") {
            return Ok(FusionMode::Static(*WeightVector::static_default().as_array()));
        }
        let Some(list) = s.strip_prefix("static:") else {
            return Err(format!("unknown fusion mode `{s}` (expected learned, static or static:a,b,c)"));
        };
        let w = list
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad weight `{x}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        let w = WeightVector::from_slice(&w).map_err(|e| e.to_string())?;
        Ok(FusionMode::Static(*w.as_array()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub path: PathBuf,
    /// `None` for a single message file.
    pub format: Option<CorpusFormat>,
    pub label: Option<Label>,
}

/// Everything that determines a run's outputs. Locations (`output_dir`,
/// `checkpoint`) are recorded but left out of the hash; the checkpoint enters
/// through its content digest instead. The same run into two directories,
/// or from a copied checkpoint, hashes alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub backend: ChatBackendConfig,
    pub corpora: Vec<CorpusSpec>,
    pub ppo: PpoConfig,
    pub threshold: f64,
    pub fusion: FusionMode,
    pub system: String,
    pub explain: Option<ExplanationMode>,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_sha256: Option<String>,
    /// Command-specific settings.
    pub extra: serde_json::Value,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn set_checkpoint(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(CliError::io(path))?;
        self.checkpoint = Some(path.to_path_buf());
        self.checkpoint_sha256 = Some(hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serialises");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
            map.remove("checkpoint");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub version: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub outputs: Vec<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    pub elapsed_ms: u128,
}

impl RunRecord {
    pub fn new(config: RunConfig) -> Self {
        let config_hash = config.hash();
        Self {
            run_id: format!("{}-{}", config.command, &config_hash[..12]),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            config,
            outputs: Vec::new(),
            checkpoints: Vec::new(),
            elapsed_ms: 0,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("run.json");
        let text = serde_json::to_string_pretty(self).expect("run record serialises");
        std::fs::write(&path, text + "\n").map_err(CliError::io(&path))?;
        Ok(path)
    }
}

/// Row wrapper that stamps the config hash onto any serialisable record.
#[derive(Serialize)]
pub struct Stamped<'a, T: Serialize> {
    #[serde(flatten)]
    pub row: &'a T,
    pub config_hash: &'a str,
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T], config_hash: &str) -> Result<(), CliError> {
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(&Stamped { row, config_hash }).expect("rows serialise");
        writeln!(w, "{line}").map_err(CliError::io(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))
}
