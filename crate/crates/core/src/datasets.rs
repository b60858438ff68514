//! Synthetic order-effect task sets.
//!
//! - D1 (evenhandedness): each question has a likeability score; along the
//!   order each effective score is pulled halfway towards the previous one.
//! - D2 (specificity priming): a general question answered after a more
//!   specific one gets its yes-probability boosted by a fixed percentage.
//!
//! Both produce answers that are independent Bernoullis given the order, so
//! every target distribution is a product.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::measure::{self, AnswerDistribution, Indexing, QuestionOrder};

/// Per-question likeability scores in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LikeabilityScores(Vec<f64>);

impl LikeabilityScores {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidDataset("need at least one score".into()));
        }
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::InvalidDataset(format!("score {s} outside [0, 1]")));
        }
        Ok(Self(scores))
    }

    /// Uniform draws from `[0, 1)`.
    pub fn random(n: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::new((0..n).map(|_| rng.gen::<f64>()).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Which previous score a D1 update averages with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chaining {
    /// The previous slot's already-updated score.
    #[default]
    Running,
    /// The previous slot's raw score.
    Raw,
}

/// Specificity-priming configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct D2Config {
    /// `ranks[q - 1]` is the specificity rank of question `q`; 1 is the most
    /// general.
    pub ranks: Vec<usize>,
    /// Yes-probability of each question without priming.
    pub baseline: Vec<f64>,
    /// Relative boost in percent.
    pub boost_percent: f64,
}

impl D2Config {
    pub fn new(ranks: Vec<usize>, baseline: Vec<f64>, boost_percent: f64) -> Result<Self> {
        let cfg = Self {
            ranks,
            baseline,
            boost_percent,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Identity ranks (question 1 most general) and uniform baselines.
    pub fn random(n: usize, boost_percent: f64, rng: &mut impl Rng) -> Result<Self> {
        let baseline = (0..n).map(|_| rng.gen::<f64>()).collect();
        Self::new((1..=n).collect(), baseline, boost_percent)
    }

    pub fn n(&self) -> usize {
        self.ranks.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.ranks.len();
        if n == 0 {
            return Err(Error::InvalidDataset("D2 needs at least one question".into()));
        }
        QuestionOrder::new(self.ranks.clone())
            .map_err(|_| Error::InvalidDataset(format!("ranks {:?} are not a permutation", self.ranks)))?;
        if self.baseline.len() != n {
            return Err(Error::InvalidDataset(format!(
                "{n} ranks but {} baseline probabilities",
                self.baseline.len()
            )));
        }
        if let Some(p) = self.baseline.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidDataset(format!("baseline {p} outside [0, 1]")));
        }
        if !(self.boost_percent.is_finite() && self.boost_percent >= 0.0) {
            return Err(Error::InvalidDataset(format!(
                "boost must be a non-negative percentage, got {}",
                self.boost_percent
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    D1,
    D2,
}

/// Generator parameters recorded alongside a task set.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetParams {
    D1 {
        scores: LikeabilityScores,
        chaining: Chaining,
    },
    D2(D2Config),
}

impl DatasetParams {
    pub fn kind(&self) -> DatasetKind {
        match self {
            DatasetParams::D1 { .. } => DatasetKind::D1,
            DatasetParams::D2(_) => DatasetKind::D2,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            DatasetParams::D1 { scores, chaining } => serde_json::json!({
                "scores": scores,
                "chaining": chaining,
            }),
            DatasetParams::D2(cfg) => serde_json::to_value(cfg).expect("D2 config serialises"),
        }
    }

    fn from_json(kind: DatasetKind, v: Value) -> Result<Self> {
        Ok(match kind {
            DatasetKind::D1 => {
                #[derive(Deserialize)]
                struct Raw {
                    scores: Vec<f64>,
                    #[serde(default)]
                    chaining: Chaining,
                }
                let raw: Raw = serde_json::from_value(v)?;
                DatasetParams::D1 {
                    scores: LikeabilityScores::new(raw.scores)?,
                    chaining: raw.chaining,
                }
            }
            DatasetKind::D2 => {
                let cfg: D2Config = serde_json::from_value(v)?;
                cfg.validate()?;
                DatasetParams::D2(cfg)
            }
        })
    }
}

/// Target distribution for every question order.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSet {
    n: usize,
    params: DatasetParams,
    seed: Option<u64>,
    tasks: BTreeMap<QuestionOrder, AnswerDistribution>,
}

impl TaskSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> DatasetKind {
        self.params.kind()
    }

    pub fn params(&self) -> &DatasetParams {
        &self.params
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn tasks(&self) -> &BTreeMap<QuestionOrder, AnswerDistribution> {
        &self.tasks
    }

    pub fn get(&self, order: &QuestionOrder) -> Option<&AnswerDistribution> {
        self.tasks.get(order)
    }

    pub fn orders(&self) -> Vec<QuestionOrder> {
        self.tasks.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn to_file(&self) -> TaskSetFile {
        TaskSetFile {
            n: self.n,
            kind: self.kind(),
            params: self.params.to_json(),
            seed: self.seed,
            indexing: Indexing::Position,
            tasks: self
                .tasks
                .iter()
                .map(|(o, d)| (o.to_string(), d.probs().to_vec()))
                .collect(),
        }
    }

    pub fn from_file(file: TaskSetFile) -> Result<Self> {
        if file.indexing != Indexing::Position {
            return Err(Error::InvalidDataset("task files must be position-indexed".into()));
        }
        let params = DatasetParams::from_json(file.kind, file.params)?;
        let mut tasks = BTreeMap::new();
        for (key, probs) in file.tasks {
            let order: QuestionOrder = key.parse()?;
            if order.len() != file.n {
                return Err(Error::InvalidDataset(format!(
                    "order {key} does not have {} entries",
                    file.n
                )));
            }
            tasks.insert(order, AnswerDistribution::new(file.n, Indexing::Position, probs)?);
        }
        let expected: usize = (1..=file.n).product();
        if tasks.len() != expected {
            return Err(Error::InvalidDataset(format!(
                "expected {expected} tasks for n = {}, found {}",
                file.n,
                tasks.len()
            )));
        }
        Ok(Self {
            n: file.n,
            params,
            seed: file.seed,
            tasks,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("task set serialises")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?)
    }
}

/// On-disk task set document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskSetFile {
    pub n: usize,
    pub kind: DatasetKind,
    pub params: Value,
    pub seed: Option<u64>,
    pub indexing: Indexing,
    pub tasks: BTreeMap<String, Vec<f64>>,
}

/// Joint distribution of independent answers with the given per-slot
/// yes-probabilities; slot 1 is the most significant bit.
pub fn product_distribution(yes_probs: &[f64]) -> Vec<f64> {
    let n = yes_probs.len();
    (0..1usize << n)
        .map(|idx| {
            yes_probs
                .iter()
                .enumerate()
                .map(|(k, &p)| if (idx >> (n - 1 - k)) & 1 == 0 { p } else { 1.0 - p })
                .product()
        })
        .collect()
}

/// Effective per-slot scores of D1 for one order.
pub fn d1_effective_scores(scores: &LikeabilityScores, order: &QuestionOrder, chaining: Chaining) -> Vec<f64> {
    let s = scores.values();
    let mut out: Vec<f64> = Vec::with_capacity(order.len());
    for (k, &q) in order.ids().iter().enumerate() {
        let raw = s[q - 1];
        let eff = if k == 0 {
            raw
        } else {
            let prev = match chaining {
                Chaining::Running => out[k - 1],
                Chaining::Raw => s[order.ids()[k - 1] - 1],
            };
            (prev + raw) / 2.0
        };
        out.push(eff);
    }
    out
}

/// Position-indexed product distribution for `order`. Factors are multiplied
/// in question-id order so that orders with equal per-question probabilities
/// give bit-identical question-indexed vectors.
fn ordered_product(order: &QuestionOrder, slot_probs: &[f64]) -> Vec<f64> {
    let n = order.len();
    let slots: Vec<usize> = (1..=n).map(|q| order.slot_of(q)).collect();
    (0..1usize << n)
        .map(|idx| {
            slots
                .iter()
                .map(|&k| {
                    let p = slot_probs[k];
                    if (idx >> (n - 1 - k)) & 1 == 0 {
                        p
                    } else {
                        1.0 - p
                    }
                })
                .product()
        })
        .collect()
}

fn build(n: usize, params: DatasetParams, per_order: impl Fn(&QuestionOrder) -> Vec<f64>) -> Result<TaskSet> {
    let tasks = QuestionOrder::all(n)
        .into_iter()
        .map(|o| {
            let d = AnswerDistribution::new(n, Indexing::Position, ordered_product(&o, &per_order(&o)))?;
            Ok((o, d))
        })
        .collect::<Result<_>>()?;
    Ok(TaskSet {
        n,
        params,
        seed: None,
        tasks,
    })
}

pub fn gen_d1(scores: &LikeabilityScores) -> Result<TaskSet> {
    gen_d1_with(scores, Chaining::Running)
}

pub fn gen_d1_with(scores: &LikeabilityScores, chaining: Chaining) -> Result<TaskSet> {
    // Re-validate: the scores may have been deserialised without `new`.
    let scores = LikeabilityScores::new(scores.values().to_vec())?;
    let n = scores.len();
    let params = DatasetParams::D1 {
        scores: scores.clone(),
        chaining,
    };
    build(n, params, |o| d1_effective_scores(&scores, o, chaining))
}

/// Yes-probabilities per slot of D2 for one order.
pub fn d2_slot_probs(cfg: &D2Config, order: &QuestionOrder) -> Vec<f64> {
    let factor = 1.0 + cfg.boost_percent / 100.0;
    order
        .ids()
        .iter()
        .enumerate()
        .map(|(k, &q)| {
            let rank = cfg.ranks[q - 1];
            let primed = order.ids()[..k].iter().any(|&prev| cfg.ranks[prev - 1] > rank);
            let p = cfg.baseline[q - 1];
            if primed {
                (p * factor).min(1.0)
            } else {
                p
            }
        })
        .collect()
}

pub fn gen_d2(cfg: &D2Config) -> Result<TaskSet> {
    cfg.validate()?;
    build(cfg.n(), DatasetParams::D2(cfg.clone()), |o| d2_slot_probs(cfg, o))
}

/// Mean over unordered pairs of orders of the squared distance between their
/// question-indexed target distributions.
pub fn oe_strength(t: &TaskSet) -> Result<f64> {
    let canon: Vec<Vec<f64>> = t
        .tasks
        .iter()
        .map(|(o, d)| Ok(measure::canonicalize(d, o)?.into_probs()))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..canon.len() {
        for b in (a + 1)..canon.len() {
            total += canon[a]
                .iter()
                .zip(&canon[b])
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>();
            pairs += 1;
        }
    }
    Ok(if pairs == 0 { 0.0 } else { total / pairs as f64 })
}
