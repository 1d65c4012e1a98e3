use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use nilm_core::eval::{ModelSpec, SplitSpec};

/// Where benchmark segments come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// A segment file written by `nilm generate`.
    File(PathBuf),
    Synthetic { classes: usize, per_class: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextConfig {
    pub fs: u32,
    pub f0: u32,
    #[serde(default = "default_duration")]
    pub duration: f64,
}

fn default_duration() -> f64 {
    0.5
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self { fs: 2000, f0: 50, duration: 0.5 }
    }
}

/// Benchmark description loaded from `--config`; flags override fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub context: ContextConfig,
    pub models: Vec<ModelSpec>,
    pub split: SplitSpec,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    /// Write every fitted pipeline as a model file.
    pub save_models: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Synthetic { classes: 8, per_class: 100 },
            context: ContextConfig::default(),
            models: ModelSpec::all(),
            split: SplitSpec::default(),
            output_dir: None,
            seed: 0,
            save_models: false,
        }
    }
}
