use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{percent_to_count, ExperimentConfig, TestSelection, TrainSelection};
use super::stats::MeanStd;
use crate::datasets::{self, D2Config, DatasetKind, LikeabilityScores, TaskSet};
use crate::error::{Error, Result};
use crate::measure::QuestionOrder;
use crate::par;
use crate::train::{self, TaskSplit, TrainConfig, TrainingTrace};

pub const SCHEMA_VERSION: u32 = 1;
pub const TRACE_HEADER: &str = "sweep_point,trial,epoch,train_loss,test_loss,zeta";

/// Fixed first score and swept second score for the D1 sweep.
pub const D1_FIRST_SCORE: f64 = 0.1;
pub const D1_DEFAULT_POINTS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
pub const D2_DEFAULT_POINTS: [f64; 10] = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0];

/// Final train loss at or below this fraction of the initial one.
pub const CONVERGENCE_RATIO: f64 = 0.1;

// Independent ChaCha streams under one trial seed. Stream 0 is the
// parameter initialisation inside `train_run`.
const DATA_STREAM: u64 = 1;
const SHARED_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SweepOe,
    Generalize,
    Train,
}

/// One training run to perform, fully determined before any training starts.
#[derive(Clone, Debug)]
pub struct TrialPlan {
    pub point: usize,
    pub point_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub targets: TaskSet,
    pub split: TaskSplit,
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub plan: TrialPlan,
    pub oe_strength: f64,
    pub trace: TrainingTrace,
}

impl TrialOutcome {
    pub fn converged(&self) -> bool {
        self.trace.last().train_loss <= CONVERGENCE_RATIO * self.trace.first().train_loss
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub sweep_point: usize,
    pub point_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub oe_strength: f64,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub initial_test_loss: Option<f64>,
    pub final_test_loss: Option<f64>,
    pub final_zeta: f64,
    pub max_zeta: f64,
    pub generalization_difference: Option<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub sweep_point: usize,
    pub point_value: f64,
    pub n_trials: usize,
    pub oe_strength: MeanStd,
    pub final_zeta: MeanStd,
    pub final_train_loss: MeanStd,
    pub final_test_loss: Option<MeanStd>,
    pub generalization_difference: Option<MeanStd>,
    pub n_converged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub command: Command,
    pub points: Vec<PointSummary>,
    pub trials: Vec<TrialSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestTrial {
    pub sweep_point: usize,
    pub point_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub dataset_kind: DatasetKind,
    pub dataset_params: Value,
    pub train_orders: Vec<QuestionOrder>,
    pub test_orders: Vec<QuestionOrder>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: ExperimentConfig,
    pub trace_columns: Vec<String>,
    pub trials: Vec<ManifestTrial>,
}

/// Every trial of one command, in (sweep point, trial) order.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub command: Command,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialOutcome>,
}

impl RunOutput {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from(TRACE_HEADER);
        s.push('\n');
        for t in &self.trials {
            for r in &t.trace.records {
                let test = r.test_loss.map(|v| v.to_string()).unwrap_or_default();
                writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    t.plan.point, t.plan.trial, r.epoch, r.train_loss, test, r.zeta
                )
                .expect("writing to a String");
            }
        }
        s
    }

    pub fn trial_summaries(&self) -> Vec<TrialSummary> {
        self.trials
            .iter()
            .map(|t| {
                let (first, last) = (t.trace.first(), t.trace.last());
                TrialSummary {
                    sweep_point: t.plan.point,
                    point_value: t.plan.point_value,
                    trial: t.plan.trial,
                    seed: t.plan.seed,
                    oe_strength: t.oe_strength,
                    initial_train_loss: first.train_loss,
                    final_train_loss: last.train_loss,
                    initial_test_loss: first.test_loss,
                    final_test_loss: last.test_loss,
                    final_zeta: last.zeta,
                    max_zeta: t.trace.records.iter().map(|r| r.zeta).fold(0.0, f64::max),
                    generalization_difference: train::generalization_difference(&t.trace).ok(),
                    converged: t.converged(),
                }
            })
            .collect()
    }

    pub fn summary(&self) -> Summary {
        let trials = self.trial_summaries();
        let mut points = Vec::new();
        let mut start = 0;
        while start < trials.len() {
            let point = trials[start].sweep_point;
            let end = start + trials[start..].iter().take_while(|t| t.sweep_point == point).count();
            let group = &trials[start..end];
            let col = |f: fn(&TrialSummary) -> f64| MeanStd::of(&group.iter().map(f).collect::<Vec<_>>());
            let opt_col = |f: fn(&TrialSummary) -> Option<f64>| {
                group.iter().map(f).collect::<Option<Vec<_>>>().map(|v| MeanStd::of(&v))
            };
            points.push(PointSummary {
                sweep_point: point,
                point_value: group[0].point_value,
                n_trials: group.len(),
                oe_strength: col(|t| t.oe_strength),
                final_zeta: col(|t| t.final_zeta),
                final_train_loss: col(|t| t.final_train_loss),
                final_test_loss: opt_col(|t| t.final_test_loss),
                generalization_difference: opt_col(|t| t.generalization_difference),
                n_converged: group.iter().filter(|t| t.converged).count(),
            });
            start = end;
        }
        Summary {
            schema_version: SCHEMA_VERSION,
            command: self.command,
            points,
            trials,
        }
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            config: self.config.for_manifest(),
            trace_columns: TRACE_HEADER.split(',').map(String::from).collect(),
            trials: self
                .trials
                .iter()
                .map(|t| ManifestTrial {
                    sweep_point: t.plan.point,
                    point_value: t.plan.point_value,
                    trial: t.plan.trial,
                    seed: t.plan.seed,
                    dataset_kind: t.plan.targets.kind(),
                    dataset_params: t.plan.targets.params().to_json(),
                    train_orders: t.plan.split.train.clone(),
                    test_orders: t.plan.split.test.clone(),
                })
                .collect(),
        }
    }

    /// Writes `trace.csv`, `summary.json` and `manifest.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("trace.csv"), self.trace_csv())?;
        fs::write(dir.join("summary.json"), to_pretty_json(&self.summary())?)?;
        fs::write(dir.join("manifest.json"), to_pretty_json(&self.manifest())?)?;
        Ok(())
    }
}

fn to_pretty_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn data_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn trial_seed(cfg: &ExperimentConfig, trial: usize) -> u64 {
    cfg.base_seed.wrapping_add(trial as u64)
}

/// Training orders for a single sweep point.
#[derive(Clone, Debug, PartialEq)]
enum PointTrain {
    All,
    Explicit(Vec<QuestionOrder>),
    Count(usize),
}

/// Splits the orders of `n` questions. Count selections shuffle once with
/// `rng` and take training orders from the front and test orders from the
/// back, so for a fixed seed larger training sets contain smaller ones.
fn select_split(n: usize, train: &PointTrain, test: &TestSelection, rng: &mut ChaCha8Rng) -> Result<TaskSplit> {
    let all = QuestionOrder::all(n);
    let check = |orders: &[QuestionOrder]| -> Result<()> {
        match orders.iter().find(|o| o.len() != n) {
            Some(o) => Err(Error::InvalidOrder(format!("{o} is not an order of {n} questions"))),
            None => Ok(()),
        }
    };
    let fixed_test = match test {
        TestSelection::Explicit(t) => {
            check(t)?;
            Some(t.clone())
        }
        TestSelection::Count(_) => None,
    };
    let mut pool: Vec<QuestionOrder> = all
        .iter()
        .filter(|o| fixed_test.as_ref().is_none_or(|t| !t.contains(o)))
        .cloned()
        .collect();
    let train_orders = match train {
        PointTrain::All => pool.clone(),
        PointTrain::Explicit(t) => {
            check(t)?;
            t.clone()
        }
        PointTrain::Count(k) => {
            if *k >= all.len() {
                return Err(Error::InvalidArgument(format!(
                    "train count {k} leaves no test orders out of {}",
                    all.len()
                )));
            }
            if *k > pool.len() {
                return Err(Error::InvalidArgument(format!(
                    "train count {k} exceeds the {} orders outside the test set",
                    pool.len()
                )));
            }
            pool.shuffle(rng);
            pool[..*k].to_vec()
        }
    };
    let test_orders = match (fixed_test, test) {
        (Some(t), _) => t,
        (None, TestSelection::Count(c)) => {
            let rest: Vec<QuestionOrder> = pool.iter().filter(|o| !train_orders.contains(o)).cloned().collect();
            let take = (*c).min(rest.len());
            rest[rest.len() - take..].to_vec()
        }
        (None, TestSelection::Explicit(_)) => unreachable!("explicit test orders handled above"),
    };
    TaskSplit::new(train_orders, test_orders)
}

/// Dataset for one trial when the generator is not pinned by a sweep.
fn trial_dataset(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<TaskSet> {
    let n = cfg.n_observables;
    let spec = &cfg.dataset;
    match spec.kind {
        DatasetKind::D1 => {
            let scores = match &spec.scores {
                Some(s) => LikeabilityScores::new(s.clone())?,
                None => LikeabilityScores::random(n, rng)?,
            };
            datasets::gen_d1_with(&scores, spec.chaining)
        }
        DatasetKind::D2 => {
            let boost = spec
                .boost_percent
                .ok_or_else(|| Error::InvalidArgument("D2 needs boost_percent".into()))?;
            datasets::gen_d2(&d2_config(cfg, boost, rng)?)
        }
    }
}

fn d2_config(cfg: &ExperimentConfig, boost: f64, rng: &mut ChaCha8Rng) -> Result<D2Config> {
    let n = cfg.n_observables;
    let spec = &cfg.dataset;
    let ranks = spec.ranks.clone().unwrap_or_else(|| (1..=n).collect());
    match &spec.baseline {
        Some(b) => D2Config::new(ranks, b.clone(), boost),
        None => {
            let drawn = D2Config::random(n, boost, rng)?;
            D2Config::new(ranks, drawn.baseline, boost)
        }
    }
}

fn check_dataset_size(cfg: &ExperimentConfig, t: &TaskSet) -> Result<()> {
    if t.n() != cfg.n_observables {
        return Err(Error::InvalidDataset(format!(
            "dataset has {} questions, model has {} observables",
            t.n(),
            cfg.n_observables
        )));
    }
    Ok(())
}

fn train_config(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        grad_method: cfg.grad_method,
        init_mode: cfg.init_mode,
        seed,
        ..TrainConfig::default()
    }
}

/// Trains every plan, in parallel when enabled. Results come back in plan
/// order regardless of scheduling.
pub fn execute(cfg: &ExperimentConfig, command: Command, plans: Vec<TrialPlan>) -> Result<RunOutput> {
    cfg.validate()?;
    let ansatz = cfg.ansatz()?;
    let results = par::with_jobs(cfg.jobs, || {
        par::map(&plans, |p| -> Result<TrialOutcome> {
            let trace = train::train_run(&ansatz, &train_config(cfg, p.seed), &p.targets, &p.split)?;
            Ok(TrialOutcome {
                plan: p.clone(),
                oe_strength: datasets::oe_strength(&p.targets)?,
                trace,
            })
        })
    });
    Ok(RunOutput {
        command,
        config: cfg.clone(),
        trials: results.into_iter().collect::<Result<_>>()?,
    })
}

/// Sweep points for `sweep-oe`, or the defaults for the dataset kind.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<f64> {
    cfg.sweep_points.clone().unwrap_or_else(|| match cfg.dataset.kind {
        DatasetKind::D1 => D1_DEFAULT_POINTS.to_vec(),
        DatasetKind::D2 => D2_DEFAULT_POINTS.to_vec(),
    })
}

/// Plans for the order-effect sweep: one dataset per sweep point, shared by
/// all trials, and every order used for training.
pub fn plan_sweep_oe(cfg: &ExperimentConfig) -> Result<Vec<TrialPlan>> {
    cfg.validate()?;
    let n = cfg.n_observables;
    let points = sweep_points(cfg);
    let mut datasets_per_point = Vec::with_capacity(points.len());
    // D2 baselines are drawn once so the sweep only varies the boost.
    let mut shared = data_rng(cfg.dataset.seed.unwrap_or(cfg.base_seed), SHARED_STREAM);
    let d2_base = match cfg.dataset.kind {
        DatasetKind::D2 => Some(d2_config(cfg, 0.0, &mut shared)?),
        DatasetKind::D1 => None,
    };
    for &x in &points {
        let t = match &d2_base {
            None => {
                let mut scores = cfg.dataset.scores.clone().unwrap_or_else(|| vec![D1_FIRST_SCORE; n]);
                if scores.len() != n {
                    return Err(Error::InvalidDataset(format!(
                        "expected {n} scores, got {}",
                        scores.len()
                    )));
                }
                if n < 2 {
                    return Err(Error::InvalidArgument("the D1 sweep needs at least 2 questions".into()));
                }
                scores[1] = x;
                datasets::gen_d1_with(&LikeabilityScores::new(scores)?, cfg.dataset.chaining)?
            }
            Some(base) => datasets::gen_d2(&D2Config::new(base.ranks.clone(), base.baseline.clone(), x)?)?,
        };
        datasets_per_point.push(t);
    }
    let mut plans = Vec::new();
    for (point, (t, &x)) in datasets_per_point.into_iter().zip(&points).enumerate() {
        for trial in 0..cfg.trials {
            plans.push(TrialPlan {
                point,
                point_value: x,
                trial,
                seed: trial_seed(cfg, trial),
                split: TaskSplit::all_train(&t),
                targets: t.clone(),
            });
        }
    }
    Ok(plans)
}

/// Plans for the generalization sweep over training-set sizes. Each trial
/// draws its dataset and order shuffle from its own seed, shared across
/// sweep points.
pub fn plan_generalize(cfg: &ExperimentConfig) -> Result<Vec<TrialPlan>> {
    cfg.validate()?;
    let total = QuestionOrder::all(cfg.n_observables).len();
    let points: Vec<(f64, usize)> = match &cfg.train_selection {
        TrainSelection::Count(ks) => ks.iter().map(|&k| (k as f64, k)).collect(),
        TrainSelection::Percent(ps) => ps.iter().map(|&p| (p, percent_to_count(total, p))).collect(),
        other => {
            return Err(Error::InvalidArgument(format!(
                "generalize sweeps train counts or percents, got {other:?}"
            )))
        }
    };
    if points.is_empty() {
        return Err(Error::InvalidArgument("no train sizes to sweep".into()));
    }
    let mut plans = Vec::new();
    for trial in 0..cfg.trials {
        let seed = trial_seed(cfg, trial);
        let mut rng = data_rng(seed, DATA_STREAM);
        let targets = trial_dataset(cfg, &mut rng)?;
        check_dataset_size(cfg, &targets)?;
        for (point, &(value, k)) in points.iter().enumerate() {
            let mut split_rng = rng.clone();
            let split = select_split(
                cfg.n_observables,
                &PointTrain::Count(k),
                &cfg.test_selection,
                &mut split_rng,
            )?;
            plans.push(TrialPlan {
                point,
                point_value: value,
                trial,
                seed,
                targets: targets.clone(),
                split,
            });
        }
    }
    plans.sort_by_key(|p| (p.point, p.trial));
    Ok(plans)
}

/// Plans for plain training runs on one task set, either given or generated
/// from the config.
pub fn plan_train(cfg: &ExperimentConfig, tasks: Option<&TaskSet>) -> Result<Vec<TrialPlan>> {
    cfg.validate()?;
    let n = cfg.n_observables;
    let total = QuestionOrder::all(n).len();
    let (value, train_sel) = match &cfg.train_selection {
        TrainSelection::All => (total as f64, PointTrain::All),
        TrainSelection::Explicit(t) => (t.len() as f64, PointTrain::Explicit(t.clone())),
        TrainSelection::Count(ks) => match ks.as_slice() {
            [k] => (*k as f64, PointTrain::Count(*k)),
            _ => return Err(Error::InvalidArgument("train takes a single train count".into())),
        },
        TrainSelection::Percent(ps) => match ps.as_slice() {
            [p] => (*p, PointTrain::Count(percent_to_count(total, *p))),
            _ => return Err(Error::InvalidArgument("train takes a single train percent".into())),
        },
    };
    let mut plans = Vec::new();
    for trial in 0..cfg.trials {
        let seed = trial_seed(cfg, trial);
        let mut rng = data_rng(seed, DATA_STREAM);
        let targets = match tasks {
            Some(t) => t.clone(),
            None => trial_dataset(cfg, &mut rng)?,
        };
        check_dataset_size(cfg, &targets)?;
        let split = select_split(n, &train_sel, &cfg.test_selection, &mut rng)?;
        plans.push(TrialPlan {
            point: 0,
            point_value: value,
            trial,
            seed,
            targets,
            split,
        });
    }
    Ok(plans)
}

pub fn run_sweep_oe(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let resolved = ExperimentConfig {
        sweep_points: Some(sweep_points(cfg)),
        ..cfg.clone()
    };
    execute(&resolved, Command::SweepOe, plan_sweep_oe(&resolved)?)
}

pub fn run_generalize(cfg: &ExperimentConfig) -> Result<RunOutput> {
    execute(cfg, Command::Generalize, plan_generalize(cfg)?)
}

pub fn run_train(cfg: &ExperimentConfig, tasks: Option<&TaskSet>) -> Result<RunOutput> {
    execute(cfg, Command::Train, plan_train(cfg, tasks)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(trials: usize, epochs: usize) -> ExperimentConfig {
        ExperimentConfig {
            trials,
            epochs,
            ..Default::default()
        }
    }

    #[test]
    fn nested_splits_across_points() {
        let cfg = ExperimentConfig {
            n_observables: 3,
            train_selection: TrainSelection::Count(vec![1, 3, 5]),
            ..small(2, 1)
        };
        let plans = plan_generalize(&cfg).unwrap();
        assert_eq!(plans.len(), 6);
        for trial in 0..2 {
            let per: Vec<&TrialPlan> = plans.iter().filter(|p| p.trial == trial).collect();
            assert_eq!(per[0].targets, per[2].targets);
            assert_eq!(per[1].split.train[..1], per[0].split.train[..]);
            assert_eq!(per[2].split.train[..3], per[1].split.train[..]);
            assert_eq!(per[0].split.test.len(), 5);
            assert_eq!(per[2].split.test.len(), 1);
        }
        assert_ne!(plans[0].targets, plans[1].targets);
    }

    #[test]
    fn train_count_must_leave_test_orders() {
        let cfg = ExperimentConfig {
            train_selection: TrainSelection::Count(vec![2]),
            ..small(1, 1)
        };
        assert!(plan_generalize(&cfg).is_err());
    }

    #[test]
    fn explicit_test_orders_are_excluded_from_training() {
        let test: Vec<QuestionOrder> = vec!["3,2,1".parse().unwrap()];
        let cfg = ExperimentConfig {
            n_observables: 3,
            train_selection: TrainSelection::Count(vec![5]),
            test_selection: TestSelection::Explicit(test.clone()),
            ..small(1, 1)
        };
        let plans = plan_train(&cfg, None).unwrap();
        assert_eq!(plans[0].split.test, test);
        assert!(!plans[0].split.train.contains(&test[0]));
        assert_eq!(plans[0].split.train.len(), 5);
    }

    #[test]
    fn sweep_oe_datasets() {
        let plans = plan_sweep_oe(&small(2, 1)).unwrap();
        assert_eq!(plans.len(), 10);
        let first = datasets::oe_strength(&plans[0].targets).unwrap();
        let second = datasets::oe_strength(&plans[2].targets).unwrap();
        assert_eq!(first, 0.0);
        assert!((second - 0.0099).abs() < 1e-12);

        let d2 = ExperimentConfig {
            n_observables: 3,
            dataset: super::super::config::DatasetSpec {
                kind: DatasetKind::D2,
                ..Default::default()
            },
            ..small(1, 1)
        };
        let plans = plan_sweep_oe(&d2).unwrap();
        assert_eq!(plans.len(), 10);
        let base = |p: &TrialPlan| p.targets.params().to_json()["baseline"].clone();
        assert_eq!(base(&plans[0]), base(&plans[9]));
    }

    #[test]
    fn outputs_have_expected_shape() {
        let out = run_sweep_oe(&ExperimentConfig {
            sweep_points: Some(vec![0.1, 0.3]),
            ..small(2, 3)
        })
        .unwrap();
        let csv = out.trace_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), 1 + 2 * 2 * 4);
        assert!(lines[1].starts_with("0,0,0,"));
        assert!(lines[1].ends_with(&format!(",{}", out.trials[0].trace.first().zeta)));
        // no test set: empty test_loss column
        assert_eq!(lines[1].split(',').nth(4), Some(""));
        let summary = out.summary();
        assert_eq!(summary.points.len(), 2);
        assert_eq!(summary.points[1].n_trials, 2);
        assert!(summary.points[0].final_test_loss.is_none());
        let m = out.manifest();
        assert_eq!(m.trials.len(), 4);
        assert_eq!(m.config.jobs, None);
    }

    #[test]
    fn execution_order_does_not_change_results() {
        let cfg = ExperimentConfig {
            n_observables: 3,
            train_selection: TrainSelection::Count(vec![2]),
            ..small(3, 2)
        };
        let plans = plan_generalize(&cfg).unwrap();
        let forward = execute(&cfg, Command::Generalize, plans.clone()).unwrap();
        let reversed: Vec<TrialPlan> = plans.into_iter().rev().collect();
        let backward = execute(&cfg, Command::Generalize, reversed).unwrap();
        for (a, b) in forward.trials.iter().zip(backward.trials.iter().rev()) {
            assert_eq!(a.trace, b.trace);
        }
    }
}
