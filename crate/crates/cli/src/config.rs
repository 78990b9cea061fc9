use std::path::{Path, PathBuf};

use midelight::corpus::{AugmentStrategy, DEFAULT_AUGMENT_RATE};
use midelight::graph::DEFAULT_WINDOW;
use midelight::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphsSection {
    pub window: usize,
}

impl Default for GraphsSection {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub strategy: AugmentStrategy,
    pub rate: f64,
    /// Synonym or contextual substitution table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self {
            strategy: AugmentStrategy::Deletion,
            rate: DEFAULT_AUGMENT_RATE,
            table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// Labeled documents sampled per class; half (rounded up) train, the
    /// rest validation.
    pub per_class_labeled: usize,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            per_class_labeled: 20,
        }
    }
}

/// Everything a run depends on. `seed` is the single root of randomness:
/// augmentation, splitting and initialization each draw from their own
/// stream seeded with it (repeat `k` uses `seed + k` for split and init).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub train: TrainConfig,
    pub graphs: GraphsSection,
    pub augment: AugmentSection,
    pub split: SplitSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// `[train]` takes its seed from the top-level `seed`, so a `seed` key
    /// inside `[train]` is rejected rather than silently ignored.
    pub fn parse(text: &str) -> Result<Self, String> {
        let table: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
        if let Some(toml::Value::Table(t)) = table.get("train") {
            if t.contains_key("seed") {
                return Err("set `seed` at the top level, not in [train]".into());
            }
        }
        let mut c: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| e.to_string())?;
        c.train.seed = c.seed;
        Ok(c)
    }

    /// Canonical text form; hashed for checkpoints.
    pub fn to_toml(&self) -> String {
        let mut table = toml::Table::try_from(self).expect("config always serializes");
        if let Some(toml::Value::Table(t)) = table.get_mut("train") {
            t.remove("seed");
        }
        toml::to_string(&table).expect("config always serializes")
    }

    /// The part of the config that shapes preprocessing artifacts.
    pub fn preprocessing_key(&self) -> String {
        let mut c = self.clone();
        c.train = TrainConfig::default();
        c.to_toml()
    }

    /// Training configuration for repeat `k`.
    pub fn train_config(&self, repeat: u64) -> TrainConfig {
        TrainConfig {
            seed: self.seed.wrapping_add(repeat),
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train
            .validate()
            .map_err(|e| CliError::Usage(format!("[train] {e}")))?;
        if self.graphs.window < 2 {
            return Err(CliError::Usage("[graphs] window must be at least 2".into()));
        }
        if !(self.augment.rate > 0.0 && self.augment.rate <= 1.0) {
            return Err(CliError::Usage("[augment] rate must lie in (0, 1]".into()));
        }
        if self.split.per_class_labeled == 0 {
            return Err(CliError::Usage(
                "[split] per_class_labeled must be at least 1".into(),
            ));
        }
        Ok(())
    }
}
