//! Declarative generation grid configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ModelError};
use crate::generation::CompletionBackendConfig;
use crate::model::{GenerationJob, PrimingExercise, DEFAULT_MAX_TOKENS, DEFAULT_MODEL_NAME};
use crate::prompt::{combination_grid, load_primings, GridSpec};

/// A generation run: which primings to use and which keyword, temperature
/// and repetition axes to sweep. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub primings_dir: PathBuf,
    /// Priming ids, in grid order.
    pub primings: Vec<String>,
    /// `null` leaves the theme out.
    pub themes: Vec<Option<String>>,
    /// An empty set leaves the concepts out.
    pub concept_sets: Vec<Vec<String>>,
    pub temperatures: Vec<f64>,
    pub repetitions: u32,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_model_name")]
    pub model_name: String,
    #[serde(default)]
    pub backend: Option<CompletionBackendConfig>,
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

fn default_model_name() -> String {
    DEFAULT_MODEL_NAME.to_string()
}

impl GridConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        let mut config: GridConfig = serde_json::from_str(&text)
            .map_err(|source| ConfigError::Parse { path: path.display().to_string(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.primings_dir = base.join(&config.primings_dir);
        if let Some(fixtures) = config.backend.as_mut().and_then(|b| b.fixtures_path.as_mut()) {
            *fixtures = base.join(&*fixtures);
        }
        Ok(config)
    }

    /// Every priming in `primings_dir`, keyed by id.
    pub fn priming_library(&self) -> Result<BTreeMap<String, PrimingExercise>, ModelError> {
        load_primings(&self.primings_dir)
    }

    /// The named primings, in config order.
    pub fn selected_primings(&self) -> Result<Vec<PrimingExercise>, ModelError> {
        let library = self.priming_library()?;
        self.primings
            .iter()
            .map(|id| library.get(id).cloned().ok_or_else(|| ModelError::UnknownPriming(id.clone())))
            .collect()
    }

    pub fn jobs(&self, primings: &[PrimingExercise]) -> Result<Vec<GenerationJob>, ModelError> {
        combination_grid(&GridSpec {
            primings,
            themes: &self.themes,
            concept_sets: &self.concept_sets,
            temperatures: &self.temperatures,
            repetitions: self.repetitions,
            max_tokens: self.max_tokens,
            model_name: &self.model_name,
        })
    }
}
