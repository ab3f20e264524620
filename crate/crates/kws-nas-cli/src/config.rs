//! The experiment file: one TOML document carrying the space, search and
//! training sections plus the data source. Unknown keys are rejected, and
//! every run writes the fully resolved document beside its outputs.

use crate::error::{CliError, Result};
use kws_nas::audio::{
    load_examples, split_dataset, split_manifest, synth_dataset, DatasetSplits, Example, Manifest,
    SplitSpec, SynthSpec,
};
use kws_nas::model::SearchSpaceConfig;
use kws_nas::search::SearchConfig;
use kws_nas::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Speech Commands directory root.
    pub root: Option<PathBuf>,
    /// Clip manifest CSV (as written by `synth`).
    pub manifest: Option<PathBuf>,
    /// Generate a synthetic dataset in memory.
    pub synth: Option<SynthSpec>,
    pub split_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub space: SearchSpaceConfig,
    pub search: SearchConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            output_dir: PathBuf::from("runs/default"),
            space: SearchSpaceConfig::default(),
            search: SearchConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        cfg.space
            .validate()
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        cfg.search
            .validate()
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        cfg.train
            .validate()
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Serialize with defaults expanded; written beside every run's outputs.
    pub fn resolved_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization")
    }

    pub fn write_resolved(&self, output_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(output_dir).map_err(|e| {
            CliError::data(format!("cannot create {}: {e}", output_dir.display()))
        })?;
        let path = output_dir.join("resolved_config.toml");
        std::fs::write(&path, self.resolved_toml())
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}

/// Featurized splits ready for search or training.
pub struct LoadedData {
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
    pub test: Vec<Example>,
}

pub fn load_data(data: &DataConfig) -> Result<LoadedData> {
    let chosen = [
        data.root.is_some(),
        data.manifest.is_some(),
        data.synth.is_some(),
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    if chosen != 1 {
        return Err(CliError::usage(
            "data section must set exactly one of root, manifest, synth".to_string(),
        ));
    }
    let spec = SplitSpec {
        seed: data.split_seed,
    };
    let splits: DatasetSplits = if let Some(root) = &data.root {
        split_dataset(root, &spec).map_err(CliError::from_audio)?
    } else if let Some(path) = &data.manifest {
        let manifest = Manifest::read(path).map_err(CliError::from_audio)?;
        split_manifest(&manifest, &spec)
    } else {
        let manifest =
            synth_dataset(data.synth.as_ref().unwrap()).map_err(CliError::from_audio)?;
        split_manifest(&manifest, &spec)
    };
    Ok(LoadedData {
        train: load_examples(&splits.train).map_err(CliError::from_audio)?,
        valid: load_examples(&splits.valid).map_err(CliError::from_audio)?,
        test: load_examples(&splits.test).map_err(CliError::from_audio)?,
    })
}
