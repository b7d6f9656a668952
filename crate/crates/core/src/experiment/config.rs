use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::{MungeParams, KNOW_DEFAULT_HARD_WEIGHT, KNOW_DEFAULT_TEMPERATURE};
use crate::data::TaskKind;
use crate::datasets::Bundled;
use crate::density::ModelConfig;
use crate::error::{invalid, Error, Result};
use crate::learners::{GbmConfig, LearnerConfigs, StackEnsembleConfig, StudentKind};

/// Data augmentation / labeling strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    Base,
    Know,
    Munge,
    Hunge,
    Gib(usize),
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Base => f.write_str("BASE"),
            Strategy::Know => f.write_str("KNOW"),
            Strategy::Munge => f.write_str("MUNGE"),
            Strategy::Hunge => f.write_str("HUNGE"),
            Strategy::Gib(k) => write!(f, "GIB-{k}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        match upper.as_str() {
            "BASE" => Ok(Strategy::Base),
            "KNOW" => Ok(Strategy::Know),
            "MUNGE" => Ok(Strategy::Munge),
            "HUNGE" => Ok(Strategy::Hunge),
            _ => upper
                .strip_prefix("GIB-")
                .and_then(|k| k.parse().ok())
                .map(Strategy::Gib)
                .ok_or_else(|| invalid(format!("unknown strategy {s:?}"))),
        }
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

/// Where the rows come from. A CSV `path` (with optional separate
/// `test_path`) or a `bundled` generator with `rows` train+validation rows
/// and `test_rows` independent test rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundled: Option<Bundled>,
    #[serde(default = "default_rows")]
    pub rows: usize,
    #[serde(default = "default_test_rows")]
    pub test_rows: usize,
    /// Share of a CSV held out for testing when no `test_path` is given.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Seed of the data itself (generation and the test split); fixed across runs.
    #[serde(default)]
    pub seed: u64,
}

fn default_rows() -> usize {
    1000
}

fn default_test_rows() -> usize {
    2000
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnowSettings {
    pub temperature: f64,
    pub hard_weight: f64,
}

impl Default for KnowSettings {
    fn default() -> Self {
        KnowSettings { temperature: KNOW_DEFAULT_TEMPERATURE, hard_weight: KNOW_DEFAULT_HARD_WEIGHT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherSettings {
    pub folds: usize,
    pub meta: GbmConfig,
    pub blend: bool,
}

impl Default for TeacherSettings {
    fn default() -> Self {
        let d = StackEnsembleConfig::default();
        TeacherSettings { folds: d.folds, meta: d.meta, blend: d.blend }
    }
}

/// Selected fields of the density model config; unset fields keep the
/// size-based preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_layers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_heads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_hidden: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_components: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
}

impl DensityOverrides {
    pub fn apply(&self, n_train: usize) -> ModelConfig {
        let mut c = ModelConfig::for_rows(n_train);
        c.n_layers = self.n_layers.unwrap_or(c.n_layers);
        c.n_heads = self.n_heads.unwrap_or(c.n_heads);
        c.d_hidden = self.d_hidden.unwrap_or(c.d_hidden);
        c.n_components = self.n_components.unwrap_or(c.n_components);
        c.dropout = self.dropout.unwrap_or(c.dropout);
        c.learning_rate = self.learning_rate.unwrap_or(c.learning_rate);
        c.batch_size = self.batch_size.unwrap_or(c.batch_size);
        c.max_epochs = self.max_epochs.unwrap_or(c.max_epochs);
        c.patience = self.patience.unwrap_or(c.patience);
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySettings {
    pub enabled: bool,
    pub rows: usize,
    pub repetitions: usize,
}

impl Default for LatencySettings {
    fn default() -> Self {
        LatencySettings { enabled: true, rows: 10_000, repetitions: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    /// Expected task; checked against the loaded data when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskKind>,
    pub strategies: Vec<Strategy>,
    #[serde(default = "all_students")]
    pub students: Vec<StudentKind>,
    /// `m = min(multiplier * n, 10^6)` synthetic rows.
    #[serde(default = "default_multiplier")]
    pub multiplier: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Student configs, shared with the teacher's level-0 learners.
    #[serde(default)]
    pub learners: LearnerConfigs,
    #[serde(default)]
    pub teacher: TeacherSettings,
    #[serde(default)]
    pub density: DensityOverrides,
    #[serde(default)]
    pub know: KnowSettings,
    /// MUNGE/HUNGE settings searched per student on validation accuracy.
    #[serde(default = "MungeParams::grid")]
    pub munge_grid: Vec<MungeParams>,
    #[serde(default)]
    pub latency: LatencySettings,
}

fn all_students() -> Vec<StudentKind> {
    StudentKind::ALL.to_vec()
}

fn default_multiplier() -> usize {
    10
}

fn default_train_fraction() -> f64 {
    0.9
}

impl ExperimentConfig {
    /// A config with every default filled in.
    pub fn new(dataset: DatasetSpec, strategies: Vec<Strategy>, seeds: Vec<u64>) -> Self {
        ExperimentConfig {
            dataset,
            task: None,
            strategies,
            students: all_students(),
            multiplier: default_multiplier(),
            seeds,
            train_fraction: default_train_fraction(),
            learners: LearnerConfigs::default(),
            teacher: TeacherSettings::default(),
            density: DensityOverrides::default(),
            know: KnowSettings::default(),
            munge_grid: MungeParams::grid(),
            latency: LatencySettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() || self.students.is_empty() || self.seeds.is_empty() {
            return Err(invalid("strategies, students and seeds must all be non-empty"));
        }
        if self.multiplier == 0 && self.strategies.iter().any(|s| matches!(s, Strategy::Munge | Strategy::Hunge | Strategy::Gib(_))) {
            return Err(invalid("augmenting strategies need a positive multiplier"));
        }
        if self.munge_grid.is_empty() && self.strategies.iter().any(|s| matches!(s, Strategy::Munge | Strategy::Hunge)) {
            return Err(invalid("MUNGE needs at least one grid point"));
        }
        for p in &self.munge_grid {
            MungeParams::new(p.swap_prob, p.local_variance)?;
        }
        if self.dataset.path.is_none() == self.dataset.bundled.is_none() {
            return Err(invalid("dataset needs exactly one of `path` or `bundled`"));
        }
        if !(0.0..1.0).contains(&self.dataset.test_fraction) {
            return Err(invalid("test_fraction must lie in [0, 1)"));
        }
        let mut seen = std::collections::HashSet::new();
        if !self.strategies.iter().all(|s| seen.insert(*s)) {
            return Err(invalid("duplicate strategy"));
        }
        Ok(())
    }

    pub fn teacher_config(&self) -> StackEnsembleConfig {
        StackEnsembleConfig {
            folds: self.teacher.folds,
            learners: self.learners.clone(),
            meta: self.teacher.meta.clone(),
            blend: self.teacher.blend,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in [Strategy::Base, Strategy::Know, Strategy::Munge, Strategy::Hunge, Strategy::Gib(1), Strategy::Gib(10)] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("gib-5".parse::<Strategy>().unwrap(), Strategy::Gib(5));
        assert!("GIB-x".parse::<Strategy>().is_err());
        assert!("GAN".parse::<Strategy>().is_err());
    }

    #[test]
    fn minimal_json_fills_defaults() {
        let c: ExperimentConfig = serde_json::from_str(
            r#"{"dataset": {"bundled": "checkerboard", "rows": 100}, "strategies": ["BASE", "GIB-1"], "seeds": [0]}"#,
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.multiplier, 10);
        assert_eq!(c.munge_grid, MungeParams::grid());
        assert_eq!(c.students, StudentKind::ALL.to_vec());
    }

    #[test]
    fn rejects_empty_lists() {
        let mut c: ExperimentConfig =
            serde_json::from_str(r#"{"dataset": {"bundled": "spiral"}, "strategies": ["BASE"], "seeds": [1]}"#).unwrap();
        c.seeds.clear();
        assert!(c.validate().is_err());
    }
}
