use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::circuit::AnsatzConfig;
use crate::datasets::{Chaining, DatasetKind};
use crate::error::{Error, Result};
use crate::measure::QuestionOrder;
use crate::train::{GradMethod, InitMode};

/// Dataset generator settings. Unset fields are filled per command (fixed
/// sweep values, or random draws from the trial seed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub scores: Option<Vec<f64>>,
    pub ranks: Option<Vec<usize>>,
    pub baseline: Option<Vec<f64>>,
    pub boost_percent: Option<f64>,
    pub chaining: Chaining,
    /// Seed for draws that are shared by every trial (D2 baselines).
    pub seed: Option<u64>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            kind: DatasetKind::D1,
            scores: None,
            ranks: None,
            baseline: None,
            boost_percent: None,
            chaining: Chaining::Running,
            seed: None,
        }
    }
}

/// How training orders are chosen. Count and percent lists are sweep axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainSelection {
    All,
    Explicit(Vec<QuestionOrder>),
    Count(Vec<usize>),
    Percent(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestSelection {
    Explicit(Vec<QuestionOrder>),
    /// Capped at the number of orders left after training orders are drawn.
    Count(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_observables: usize,
    /// Defaults to `n_observables`.
    pub n_qubits: Option<usize>,
    pub dataset: DatasetSpec,
    pub trials: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub train_selection: TrainSelection,
    pub test_selection: TestSelection,
    /// Sweep values for `sweep-oe`: second likeability score (D1) or boost
    /// percentage (D2).
    pub sweep_points: Option<Vec<f64>>,
    pub base_seed: u64,
    pub grad_method: GradMethod,
    pub init_mode: InitMode,
    /// Worker threads; does not affect results.
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_observables: 2,
            n_qubits: None,
            dataset: DatasetSpec::default(),
            trials: 15,
            epochs: 150,
            learning_rate: 0.1,
            train_selection: TrainSelection::All,
            test_selection: TestSelection::Count(10),
            sweep_points: None,
            base_seed: 0,
            grad_method: GradMethod::ParamShift,
            init_mode: InitMode::IdenticalRandom,
            jobs: None,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn ansatz(&self) -> Result<AnsatzConfig> {
        AnsatzConfig::with_qubits(self.n_observables, self.n_qubits.unwrap_or(self.n_observables))
    }

    pub fn validate(&self) -> Result<()> {
        self.ansatz()?;
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if let TrainSelection::Percent(ps) = &self.train_selection {
            if let Some(p) = ps.iter().find(|p| !(**p > 0.0 && **p <= 100.0)) {
                return Err(Error::InvalidArgument(format!("percent {p} outside (0, 100]")));
            }
        }
        if let (TrainSelection::Explicit(train), TestSelection::Explicit(test)) =
            (&self.train_selection, &self.test_selection)
        {
            if let Some(o) = train.iter().find(|o| test.contains(o)) {
                return Err(Error::InvalidArgument(format!("order {o} is in both train and test")));
            }
        }
        Ok(())
    }

    /// The config as recorded in manifests: runtime-only knobs removed so
    /// artifacts do not depend on where or how wide they were produced.
    pub fn for_manifest(&self) -> Self {
        Self {
            jobs: None,
            out_dir: None,
            ..self.clone()
        }
    }
}

/// Percent of `total` rounded to the nearest count, at least 1.
pub fn percent_to_count(total: usize, percent: f64) -> usize {
    ((total as f64 * percent / 100.0).round() as usize).max(1)
}
