use std::fs;
use std::path::Path;

use icfinv_core::data::{Regime, SplitSpec, ALLOWED_FRACTIONS};
use icfinv_core::sensitivity::SensitivityConfig;
use icfinv_core::training::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const EFFECTIVE_CONFIG: &str = "effective_config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    pub n: usize,
    pub size: usize,
    pub seed: u64,
    pub regime: Regime,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            n: 2000,
            size: 16,
            seed: 0,
            regime: Regime::Finetune,
        }
    }
}

/// Fractions and seed count of the scale and compare studies. Run `s` of a
/// study uses training seed `train.seed + s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub fractions: Vec<f64>,
    pub seeds: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            fractions: ALLOWED_FRACTIONS.to_vec(),
            seeds: 3,
        }
    }
}

/// Everything a command reads besides input and output paths. Commands
/// write the effective value to `effective_config.json`; passing that file
/// back through `--config` reproduces the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub generate: GenerateConfig,
    pub split: SplitSpec,
    pub sensitivity: SensitivityConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub study: StudyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            generate: GenerateConfig::default(),
            split: SplitSpec::default(),
            sensitivity: SensitivityConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::desk(),
            study: StudyConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, or the file at `path` laid over them key by key.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Missing keys take the values of [`RunConfig::default`] at any depth,
    /// so a partial `train` section keeps the desk-scale learning rates.
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        let overlay: Value = serde_json::from_str(text)?;
        let mut merged = serde_json::to_value(RunConfig::default())?;
        merge(&mut merged, overlay);
        serde_json::from_value(merged)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Write the echo into `dir`, creating it.
    pub fn write_effective(&self, dir: &Path) -> CliResult<()> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(EFFECTIVE_CONFIG);
        fs::write(&path, self.to_json()).map_err(|e| CliError::io(&path, e))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.split.validate()?;
        self.model.tsh.validate()?;
        self.train.validate()?;
        if self.study.seeds == 0 {
            return Err(CliError::Usage("study needs at least one seed".into()));
        }
        if self.study.fractions.is_empty() {
            return Err(CliError::Usage("study needs at least one fraction".into()));
        }
        for &f in &self.study.fractions {
            icfinv_core::data::check_fraction(f)?;
        }
        Ok(())
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(base), Value::Object(overlay)) => {
            for (key, value) in overlay {
                match base.get_mut(&key) {
                    Some(slot) => merge(slot, value),
                    None => {
                        base.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}
