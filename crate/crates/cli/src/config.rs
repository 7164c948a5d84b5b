//! Run configuration: one file (TOML or JSON) describing the backend, the
//! task, the training recipe, the dataset paths and the output directory.
//! Command-line flags override individual fields; the SHA-256 of the
//! effective configuration is embedded in every emitted artifact.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tspmgs_core::experiment::ExperimentConfig;
use tspmgs_core::pipeline::{ImageInputMode, ScoringConfig};
use tspmgs_core::training::{ModelSelection, TrainConfig};
use tspmgs_core::{AlphaMode, BackendConfig, PromptScheme, TaskKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub task: TaskKind,
    pub scheme: PromptScheme,
    pub alpha_mode: AlphaMode,
    pub patches_n: usize,
    pub image_input: ImageInputMode,
    pub seed: u64,
    pub deterministic: bool,
    pub zero_shot: bool,
    /// Softmax temperature override; unset uses 1 / logit_scale.
    pub temperature: Option<f64>,
    /// Custom quality-level words (ascending); empty keeps the scheme's list.
    pub custom_levels: Vec<String>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            task: TaskKind::Perception,
            scheme: PromptScheme::Adjective,
            alpha_mode: AlphaMode::Learned,
            patches_n: 5,
            image_input: ImageInputMode::Both,
            seed: 0,
            deterministic: true,
            zero_shot: false,
            temperature: None,
            custom_levels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub scheduler_period: usize,
    pub repetitions: u32,
    pub split_ratio: f64,
    pub freeze_image_tower: bool,
    pub freeze_text_tower: bool,
    pub model_selection: ModelSelection,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            learning_rate: 5e-6,
            weight_decay: 5e-4,
            epochs: 20,
            batch_size: 16,
            scheduler_period: 5,
            repetitions: 10,
            split_ratio: 0.8,
            freeze_image_tower: false,
            freeze_text_tower: false,
            model_selection: ModelSelection::BestValSrcc,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    pub manifest: PathBuf,
    pub image_dir: PathBuf,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsSection {
    /// Also report PLCC after the four-parameter logistic remap.
    pub logistic_plcc: bool,
}

/// The full run configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub backend: BackendConfig,
    pub run: RunSection,
    pub train: TrainSection,
    pub data: DataSection,
    pub metrics: MetricsSection,
}

impl RunConfig {
    /// Loads TOML or JSON, chosen by extension (anything that is not `.json`
    /// parses as TOML).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .with_context(|| format!("invalid JSON config {}", path.display()))?
        } else {
            toml::from_str(&text)
                .with_context(|| format!("invalid TOML config {}", path.display()))?
        };
        Ok(cfg)
    }

    /// SHA-256 of the effective configuration, hex-encoded. The output
    /// directory is excluded: it names where artifacts land, not what is
    /// computed, and identically seeded runs into different directories must
    /// hash identically.
    pub fn hash(&self) -> String {
        let mut recipe = self.clone();
        recipe.data.output_dir = PathBuf::new();
        let canonical = serde_json::to_string(&recipe).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks scheme/task pairing and that the data paths resolve.
    pub fn validate(&self, needs_data: bool) -> Result<()> {
        self.scoring().validate()?;
        self.backend.validate()?;
        if needs_data {
            if !self.data.manifest.exists() {
                bail!("manifest not found: {}", self.data.manifest.display());
            }
            if !self.data.image_dir.is_dir() {
                bail!("image directory not found: {}", self.data.image_dir.display());
            }
        }
        Ok(())
    }

    pub fn scoring(&self) -> ScoringConfig {
        ScoringConfig {
            task: self.run.task,
            scheme: self.run.scheme,
            custom_levels: (!self.run.custom_levels.is_empty())
                .then(|| self.run.custom_levels.clone()),
            patches_n: self.run.patches_n,
            temperature: self.run.temperature,
            image_input: self.run.image_input,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            scoring: self.scoring(),
            alpha_mode: self.run.alpha_mode,
            learning_rate: self.train.learning_rate,
            weight_decay: self.train.weight_decay,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            scheduler_period: self.train.scheduler_period,
            seed: self.run.seed,
            freeze_image_tower: self.train.freeze_image_tower,
            freeze_text_tower: self.train.freeze_text_tower,
            model_selection: self.train.model_selection,
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            train: self.train_config(),
            split_ratio: self.train.split_ratio,
            repetitions: self.train.repetitions,
            zero_shot: self.run.zero_shot,
        }
    }

    /// Quality levels L implied by the scheme or the custom level list.
    pub fn levels(&self) -> usize {
        if self.run.custom_levels.is_empty() {
            self.run.scheme.levels()
        } else {
            self.run.custom_levels.len()
        }
    }
}

pub fn parse_task(s: &str) -> Result<TaskKind> {
    match s {
        "perception" => Ok(TaskKind::Perception),
        "alignment" => Ok(TaskKind::Alignment),
        other => bail!("unknown task {other:?} (expected perception|alignment)"),
    }
}

pub fn parse_scheme(s: &str) -> Result<PromptScheme> {
    match s {
        "antonym" | "ant" => Ok(PromptScheme::Antonym),
        "adjective" | "adj" => Ok(PromptScheme::Adjective),
        "adverb" | "adv" => Ok(PromptScheme::Adverb),
        other => bail!("unknown scheme {other:?} (expected antonym|adjective|adverb)"),
    }
}

pub fn parse_alpha_mode(s: &str) -> Result<AlphaMode> {
    match s {
        "fixed_0" | "0" => Ok(AlphaMode::Fixed0),
        "fixed_1" | "1" => Ok(AlphaMode::Fixed1),
        "learned" => Ok(AlphaMode::Learned),
        other => bail!("unknown alpha mode {other:?} (expected fixed_0|fixed_1|learned)"),
    }
}

pub fn parse_image_input(s: &str) -> Result<ImageInputMode> {
    match s {
        "only_image" => Ok(ImageInputMode::OnlyImage),
        "only_patches" => Ok(ImageInputMode::OnlyPatches),
        "both" => Ok(ImageInputMode::Both),
        other => bail!("unknown image input {other:?} (expected only_image|only_patches|both)"),
    }
}
