//! Experiment configuration files.
//!
//! A config is a TOML document with the sections `[dataset]`, `[model]`,
//! `[scenario]`, `[unlearn]` and `[run]`. Every key except the dataset
//! source has a default; unknown keys are rejected.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::synthetic::{generate, SyntheticConfig};
use crate::data::{build_dataset, load_interactions, Dataset, InteractionLog, LogFormat, Split};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_KS;
use crate::models::{ModelHyper, ModelKind};
use crate::scenarios::{ScenarioKind, SpamConfig, DEFAULT_SENSITIVE_BUDGET, DEFAULT_SPAM_BATCH};
use crate::unlearn::{AlgoConfig, DivergencePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    LeaveLastOut,
    Temporal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Interaction log (`user_id item_id timestamp [category]`, tab separated).
    /// Relative paths resolve against the config file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Generate the log instead of reading it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    pub split: SplitKind,
    /// Held-out share per user under the temporal split.
    pub test_fraction: f64,
    pub min_interactions: usize,
    pub sensitive_categories: Vec<String>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            path: None,
            synthetic: None,
            split: SplitKind::LeaveLastOut,
            test_fraction: 0.2,
            min_interactions: 2,
            sensitive_categories: Vec::new(),
        }
    }
}

impl DatasetSection {
    pub fn split_spec(&self) -> Split {
        match self.split {
            SplitKind::LeaveLastOut => Split::LeaveLastOut,
            SplitKind::Temporal => Split::TemporalFraction(self.test_fraction),
        }
    }

    pub fn load_log(&self) -> Result<InteractionLog> {
        match (&self.path, &self.synthetic) {
            (Some(_), Some(_)) => Err(Error::Config("dataset: set either `path` or `synthetic`, not both".into())),
            (Some(p), None) => load_interactions(p, LogFormat::Tsv),
            (None, Some(s)) => generate(s),
            (None, None) => Err(Error::Config("dataset: missing `path`".into())),
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        let log = self.load_log()?;
        let sensitive: BTreeSet<String> = self.sensitive_categories.iter().cloned().collect();
        build_dataset(&log, self.split_spec(), self.min_interactions, sensitive)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub epochs: usize,
    pub embedding_dim: usize,
    pub layers: usize,
    pub learning_rate: f64,
    pub l2_reg: f64,
    pub negatives_per_positive: usize,
    pub batch_size: usize,
    pub init_std: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self::new(ModelKind::BprMf, 20, ModelHyper::default())
    }
}

impl ModelSection {
    pub fn new(kind: ModelKind, epochs: usize, h: ModelHyper) -> Self {
        Self {
            kind,
            epochs,
            embedding_dim: h.embedding_dim,
            layers: h.layers,
            learning_rate: h.learning_rate,
            l2_reg: h.l2_reg,
            negatives_per_positive: h.negatives_per_positive,
            batch_size: h.batch_size,
            init_std: h.init_std,
        }
    }

    pub fn hyper(&self) -> ModelHyper {
        ModelHyper {
            embedding_dim: self.embedding_dim,
            layers: self.layers,
            learning_rate: self.learning_rate,
            l2_reg: self.l2_reg,
            negatives_per_positive: self.negatives_per_positive,
            batch_size: self.batch_size,
            init_std: self.init_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub kind: ScenarioKind,
    /// Sensitive scenario: forgotten interactions as a fraction of train.
    pub budget_fraction: f64,
    pub spam_fraction: f64,
    pub n_target_items: usize,
    pub popular_pool_size: usize,
    pub session_length: usize,
    /// Spam users per removal request.
    pub batch_size: usize,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let spam = SpamConfig::default();
        Self {
            kind: ScenarioKind::Sensitive,
            budget_fraction: DEFAULT_SENSITIVE_BUDGET,
            spam_fraction: spam.spam_fraction,
            n_target_items: spam.n_target_items,
            popular_pool_size: spam.popular_pool_size,
            session_length: spam.session_length,
            batch_size: DEFAULT_SPAM_BATCH,
        }
    }
}

impl ScenarioSection {
    pub fn spam(&self) -> SpamConfig {
        SpamConfig {
            spam_fraction: self.spam_fraction,
            n_target_items: self.n_target_items,
            popular_pool_size: self.popular_pool_size,
            session_length: self.session_length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seeds: Vec<u64>,
    pub ks: Vec<usize>,
    pub out_dir: PathBuf,
    pub policy: DivergencePolicy,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seeds: (1..=5).collect(),
            ks: DEFAULT_KS.to_vec(),
            out_dir: PathBuf::from("runs"),
            policy: DivergencePolicy::Continue,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub scenario: ScenarioSection,
    pub unlearn: AlgoConfig,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.path.is_none() && self.dataset.synthetic.is_none() {
            return Err(Error::Config("dataset: missing `path`".into()));
        }
        if self.dataset.path.is_some() && self.dataset.synthetic.is_some() {
            return Err(Error::Config("dataset: set either `path` or `synthetic`, not both".into()));
        }
        if self.dataset.split == SplitKind::Temporal && !(self.dataset.test_fraction > 0.0 && self.dataset.test_fraction <= 1.0) {
            return Err(Error::Config("dataset.test_fraction must lie in (0, 1]".into()));
        }
        self.model.hyper().validate()?;
        if self.model.epochs == 0 && self.model.kind.is_gradient_based() {
            return Err(Error::Config("model.epochs must be positive".into()));
        }
        match self.scenario.kind {
            ScenarioKind::Sensitive => {
                if !(self.scenario.budget_fraction > 0.0 && self.scenario.budget_fraction <= 1.0) {
                    return Err(Error::Config("scenario.budget_fraction must lie in (0, 1]".into()));
                }
                if self.dataset.sensitive_categories.is_empty() {
                    return Err(Error::Config("the sensitive scenario needs dataset.sensitive_categories".into()));
                }
            }
            ScenarioKind::Spam => {
                self.scenario.spam().validate()?;
                if self.scenario.batch_size == 0 {
                    return Err(Error::Config("scenario.batch_size must be at least 1".into()));
                }
            }
        }
        self.unlearn.validate()?;
        if self.run.seeds.is_empty() {
            return Err(Error::Config("run.seeds is empty".into()));
        }
        let distinct: BTreeSet<u64> = self.run.seeds.iter().copied().collect();
        if distinct.len() != self.run.seeds.len() {
            return Err(Error::Config("run.seeds has duplicates".into()));
        }
        if self.run.ks.is_empty() || self.run.ks.contains(&0) {
            return Err(Error::Config("run.ks must be non-empty and positive".into()));
        }
        Ok(())
    }

    /// Short digest of everything that determines the results: the config
    /// minus seeds and output directory, plus the dataset contents.
    pub fn digest(&self, dataset: &Dataset) -> Result<String> {
        let mut stripped = self.clone();
        stripped.run.seeds.clear();
        stripped.run.out_dir = PathBuf::new();
        stripped.dataset.path = None;
        let mut h = Sha256::new();
        h.update(stripped.to_toml_string()?.as_bytes());
        h.update(dataset.digest().as_bytes());
        Ok(hex::encode(h.finalize())[..12].to_string())
    }

    /// A fully populated config with a placeholder dataset path.
    pub fn documented_defaults() -> String {
        let cfg = ExperimentConfig {
            dataset: DatasetSection {
                path: Some(PathBuf::from("interactions.tsv")),
                ..Default::default()
            },
            ..Default::default()
        };
        cfg.to_toml_string().unwrap_or_default()
    }
}

/// Reads a config file. A relative dataset path is resolved against the
/// file's directory.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = ExperimentConfig::from_toml_str(&text)?;
    if let Some(p) = &cfg.dataset.path {
        if p.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.dataset.path = Some(base.join(p));
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unlearn::Algorithm;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "[dataset]\npath = \"x.tsv\"\nsensitive_categories = [\"health\"]\n",
        )
        .unwrap();
        assert_eq!(cfg.unlearn.max_norm, Some(10.0));
        assert_eq!(cfg.unlearn.seif_sigma, 0.6);
        assert_eq!(cfg.scenario.batch_size, 256);
        assert_eq!(cfg.run.seeds, vec![1, 2, 3, 4, 5]);
        assert_eq!(cfg.run.ks, vec![10, 20]);
    }

    #[test]
    fn typo_names_the_key() {
        let err = ExperimentConfig::from_toml_str(
            "[dataset]\npath = \"x.tsv\"\nsensitive_categories = [\"a\"]\n[unlearn]\nalgoritm = \"scif\"\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("algoritm"), "{err}");
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in [
            "[dataset]\nsensitive_categories = [\"a\"]\n",
            "[dataset]\npath = \"x\"\nsensitive_categories = [\"a\"]\n[unlearn]\nalgorithm = \"nope\"\n",
            "[dataset]\npath = \"x\"\nsensitive_categories = [\"a\"]\n[model]\nepochs = \"ten\"\n",
            "[dataset]\npath = \"x\"\n",
        ] {
            assert!(matches!(ExperimentConfig::from_toml_str(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn round_trip_with_infinities() {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.synthetic = Some(SyntheticConfig::default());
        cfg.dataset.sensitive_categories = vec!["cat0".into()];
        cfg.unlearn.algorithm = Algorithm::Idea;
        cfg.unlearn.max_norm = None;
        cfg.unlearn.epsilon = 2.5;
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }
}
