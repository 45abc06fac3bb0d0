//! Run configuration: JSON file, then command-line overrides.

use std::path::{Path, PathBuf};

use flowxai::dataio::DEFAULT_DROP_COLUMNS;
use flowxai::featsel::ImportanceMetric;
use flowxai::model_gbt::GbtConfig;
use flowxai::model_mlp::{Activation, Optimizer, TrainConfig, DEFAULT_HIDDEN};
use flowxai::rng::derive_seed;
use flowxai::synthgen::{BENIGN_LABEL, LABEL_COLUMN};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Benign traffic against a single attack type.
    #[default]
    OneToOne,
    /// Benign traffic against every attack type, pooled as malicious.
    OneToAll,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::OneToOne => "one-to-one",
            Scenario::OneToAll => "one-to-all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSettings {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
}

impl Default for MlpSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            activation: Activation::default(),
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            optimizer: OptimizerKind::Sgd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtSettings {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub subsample: f64,
}

impl Default for GbtSettings {
    fn default() -> Self {
        let g = GbtConfig::default();
        Self {
            n_trees: g.n_trees,
            max_depth: g.max_depth,
            learning_rate: g.learning_rate,
            lambda: g.lambda,
            gamma: g.gamma,
            subsample: g.subsample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub label_column: String,
    pub benign_label: String,
    /// Attack labels to keep. Empty means every non-benign label present.
    pub attack_labels: Vec<String>,
    pub drop_columns: Vec<String>,
    pub seed: u64,
    /// Fraction of each attack type's rows kept; benign rows are all kept.
    pub attack_fraction: f64,
    pub test_fraction: f64,
    pub stratified: bool,
    pub top_k: usize,
    pub mlp: MlpSettings,
    pub gbt: GbtSettings,
    pub importance_metric: ImportanceMetric,
    pub permutation_repeats: usize,
    /// Training rows explained by the tree model for SHAP importance.
    pub importance_rows: usize,
    pub background_size: usize,
    /// Kernel SHAP coalition budget; 0 enumerates every coalition.
    pub shap_samples: usize,
    /// Fraction of test rows explained for the global artifacts.
    pub explain_fraction: f64,
    /// Benign probability at or above which a flow is called benign.
    pub threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::OneToOne,
            input: None,
            output: None,
            label_column: LABEL_COLUMN.to_string(),
            benign_label: BENIGN_LABEL.to_string(),
            attack_labels: Vec::new(),
            drop_columns: DEFAULT_DROP_COLUMNS.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            attack_fraction: 1.0,
            test_fraction: 0.2,
            stratified: true,
            top_k: 20,
            mlp: MlpSettings::default(),
            gbt: GbtSettings::default(),
            importance_metric: ImportanceMetric::Accuracy,
            permutation_repeats: 5,
            importance_rows: 100,
            background_size: 100,
            shap_samples: 512,
            explain_fraction: 0.25,
            threshold: 0.5,
        }
    }
}

fn check(ok: bool, message: impl FnOnce() -> String) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::bad_input("config", message()))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::bad_input("config", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::bad_input("config", format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        check(self.top_k >= 1, || "top_k must be at least 1".into())?;
        check(self.attack_fraction > 0.0 && self.attack_fraction <= 1.0, || {
            format!("attack_fraction {} outside (0, 1]", self.attack_fraction)
        })?;
        check(self.test_fraction > 0.0 && self.test_fraction < 1.0, || {
            format!("test_fraction {} outside (0, 1)", self.test_fraction)
        })?;
        check(self.explain_fraction > 0.0 && self.explain_fraction <= 1.0, || {
            format!("explain_fraction {} outside (0, 1]", self.explain_fraction)
        })?;
        check((0.0..=1.0).contains(&self.threshold), || {
            format!("threshold {} outside [0, 1]", self.threshold)
        })?;
        check(self.background_size >= 1, || "background_size must be at least 1".into())?;
        check(self.importance_rows >= 1, || "importance_rows must be at least 1".into())?;
        check(self.permutation_repeats >= 1, || "permutation_repeats must be at least 1".into())?;
        check(!self.label_column.is_empty(), || "label_column is empty".into())?;
        check(!self.attack_labels.contains(&self.benign_label), || {
            "benign_label is also listed as an attack label".into()
        })?;
        check(self.mlp.hidden.iter().all(|&h| h >= 1), || "hidden layer sizes must be positive".into())?;
        self.train_config()
            .validate()
            .map_err(|e| CliError::bad_input("config", e))?;
        self.gbt_config(0)
            .validate()
            .map_err(|e| CliError::bad_input("config", e))?;
        Ok(())
    }

    /// Child seed for a named stage: the first eight bytes of
    /// SHA-256(root seed little-endian ++ stage name).
    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.mlp.epochs,
            batch_size: self.mlp.batch_size,
            learning_rate: self.mlp.learning_rate,
            seed: self.stage_seed("mlp-train"),
            optimizer: match self.mlp.optimizer {
                OptimizerKind::Sgd => Optimizer::Sgd,
                OptimizerKind::Adam => Optimizer::adam(),
            },
        }
    }

    pub fn gbt_config(&self, seed: u64) -> GbtConfig {
        GbtConfig {
            n_trees: self.gbt.n_trees,
            max_depth: self.gbt.max_depth,
            learning_rate: self.gbt.learning_rate,
            lambda: self.gbt.lambda,
            gamma: self.gbt.gamma,
            subsample: self.gbt.subsample,
            seed,
        }
    }

    pub fn input(&self) -> CliResult<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::bad_input("config", "no input file given"))
    }

    pub fn output(&self) -> CliResult<&Path> {
        self.output
            .as_deref()
            .ok_or_else(|| CliError::bad_input("config", "no output directory given"))
    }
}
