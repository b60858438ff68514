use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;

use super::config::{ExperimentConfig, TestSelection, TrainSelection};
use super::run::{self, RunOutput};
use super::validate;
use crate::datasets::{self, Chaining, D2Config, DatasetKind, LikeabilityScores, TaskSet};
use crate::error::{Error, Result};
use crate::measure::QuestionOrder;
use crate::train::{GradMethod, InitMode};

const DEFAULT_OUT_DIR: &str = "results";

#[derive(Debug, Parser)]
#[command(
    name = "qorder",
    version,
    about = "Order effects in sequential-measurement quantum models"
)]
pub struct Cli {
    /// Base seed; trial i uses seed + i.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for trials (results do not depend on it).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// JSON experiment config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Write a task set file and print its order-effect strength.
    GenData(GenDataArgs),
    /// Train on every order while sweeping the dataset's order-effect strength.
    SweepOe(SweepArgs),
    /// Train on subsets of orders and measure loss on held-out orders.
    Generalize(GeneralizeArgs),
    /// Train on one task set.
    Train(TrainArgs),
    /// Run the oracle and anchor suites.
    Validate,
}

fn parse_serde<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_kind(s: &str) -> std::result::Result<DatasetKind, String> {
    parse_serde(s)
}

fn parse_chaining(s: &str) -> std::result::Result<Chaining, String> {
    parse_serde(s)
}

fn parse_grad(s: &str) -> std::result::Result<GradMethod, String> {
    parse_serde(s)
}

fn parse_init(s: &str) -> std::result::Result<InitMode, String> {
    parse_serde(s)
}

fn parse_order(s: &str) -> std::result::Result<QuestionOrder, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Default, Args)]
pub struct DatasetArgs {
    /// d1 or d2.
    #[arg(long, value_parser = parse_kind)]
    pub dataset: Option<DatasetKind>,
    /// Number of questions (observables).
    #[arg(long)]
    pub n: Option<usize>,
    /// D1 likeability scores, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub scores: Option<Vec<f64>>,
    /// D2 specificity ranks, 1 = most specific.
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    /// D2 baseline yes-probabilities.
    #[arg(long, value_delimiter = ',')]
    pub baseline: Option<Vec<f64>>,
    /// D2 boost percentage.
    #[arg(long)]
    pub boost: Option<f64>,
    /// D1 chaining: running or raw.
    #[arg(long, value_parser = parse_chaining)]
    pub chaining: Option<Chaining>,
    /// Seed for dataset draws shared by all trials.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Default, Args)]
pub struct TrainingArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long)]
    pub n_qubits: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// param-shift or fd.
    #[arg(long, value_parser = parse_grad)]
    pub grad: Option<GradMethod>,
    /// identical-random or independent-random.
    #[arg(long, value_parser = parse_init)]
    pub init: Option<InitMode>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Output file; defaults to tasks.json in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Second D1 score or D2 boost per sweep point.
    #[arg(long, value_delimiter = ',')]
    pub points: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct GeneralizeArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long, value_delimiter = ',', conflicts_with = "train_percents")]
    pub train_counts: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub train_percents: Option<Vec<f64>>,
    #[arg(long)]
    pub test_count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Task set file from gen-data; otherwise generated from dataset flags.
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// Semicolon-separated orders, e.g. "1,2,3;3,2,1".
    #[arg(long, value_delimiter = ';', value_parser = parse_order)]
    pub train_orders: Option<Vec<QuestionOrder>>,
    #[arg(long, value_delimiter = ';', value_parser = parse_order)]
    pub test_orders: Option<Vec<QuestionOrder>>,
    #[arg(long, conflicts_with_all = ["train_orders", "train_percent"])]
    pub train_count: Option<usize>,
    #[arg(long, conflicts_with = "train_orders")]
    pub train_percent: Option<f64>,
    #[arg(long, conflicts_with = "test_orders")]
    pub test_count: Option<usize>,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_json_str(&fs::read_to_string(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn apply_dataset(cfg: &mut ExperimentConfig, d: &DatasetArgs) {
    if let Some(k) = d.dataset {
        cfg.dataset.kind = k;
    }
    if let Some(n) = d.n {
        cfg.n_observables = n;
    }
    if let Some(s) = &d.scores {
        cfg.dataset.scores = Some(s.clone());
    }
    if let Some(r) = &d.ranks {
        cfg.dataset.ranks = Some(r.clone());
    }
    if let Some(b) = &d.baseline {
        cfg.dataset.baseline = Some(b.clone());
    }
    if let Some(x) = d.boost {
        cfg.dataset.boost_percent = Some(x);
    }
    if let Some(c) = d.chaining {
        cfg.dataset.chaining = c;
    }
    if let Some(s) = d.data_seed {
        cfg.dataset.seed = Some(s);
    }
}

fn apply_training(cfg: &mut ExperimentConfig, t: &TrainingArgs) {
    apply_dataset(cfg, &t.dataset);
    if let Some(q) = t.n_qubits {
        cfg.n_qubits = Some(q);
    }
    if let Some(v) = t.trials {
        cfg.trials = v;
    }
    if let Some(v) = t.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = t.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = t.grad {
        cfg.grad_method = v;
    }
    if let Some(v) = t.init {
        cfg.init_mode = v;
    }
}

impl Cli {
    /// Config file plus global flags.
    fn base_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = load_config(self.config.as_deref())?;
        if let Some(s) = self.seed {
            cfg.base_seed = s;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = Some(j);
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = Some(d.clone());
        }
        Ok(cfg)
    }

    /// The fully resolved config for a training subcommand.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = self.base_config()?;
        match &self.command {
            Cmd::SweepOe(a) => {
                apply_training(&mut cfg, &a.training);
                if let Some(p) = &a.points {
                    cfg.sweep_points = Some(p.clone());
                }
                cfg.train_selection = TrainSelection::All;
            }
            Cmd::Generalize(a) => {
                apply_training(&mut cfg, &a.training);
                if let Some(c) = &a.train_counts {
                    cfg.train_selection = TrainSelection::Count(c.clone());
                } else if let Some(p) = &a.train_percents {
                    cfg.train_selection = TrainSelection::Percent(p.clone());
                }
                if let Some(c) = a.test_count {
                    cfg.test_selection = TestSelection::Count(c);
                }
            }
            Cmd::Train(a) => {
                // A single run unless asked otherwise.
                if self.config.is_none() {
                    cfg.trials = 1;
                }
                apply_training(&mut cfg, &a.training);
                if let Some(o) = &a.train_orders {
                    cfg.train_selection = TrainSelection::Explicit(o.clone());
                } else if let Some(k) = a.train_count {
                    cfg.train_selection = TrainSelection::Count(vec![k]);
                } else if let Some(p) = a.train_percent {
                    cfg.train_selection = TrainSelection::Percent(vec![p]);
                }
                if let Some(o) = &a.test_orders {
                    cfg.test_selection = TestSelection::Explicit(o.clone());
                } else if let Some(c) = a.test_count {
                    cfg.test_selection = TestSelection::Count(c);
                }
            }
            Cmd::GenData(a) => apply_dataset(&mut cfg, &a.dataset),
            Cmd::Validate => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
        cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

/// Builds the task set described by the dataset part of `cfg`. Unset D1
/// scores and D2 baselines are drawn from `seed`.
pub fn gen_task_set(cfg: &ExperimentConfig, seed: u64) -> Result<TaskSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = &cfg.dataset;
    let t = match d.kind {
        DatasetKind::D1 => {
            let scores = match &d.scores {
                Some(s) => LikeabilityScores::new(s.clone())?,
                None => LikeabilityScores::random(cfg.n_observables, &mut rng)?,
            };
            datasets::gen_d1_with(&scores, d.chaining)?
        }
        DatasetKind::D2 => {
            let boost = d
                .boost_percent
                .ok_or_else(|| Error::InvalidArgument("D2 needs --boost".into()))?;
            let n = d.baseline.as_ref().map_or(cfg.n_observables, Vec::len);
            let ranks = d.ranks.clone().unwrap_or_else(|| (1..=n).collect());
            let baseline = match &d.baseline {
                Some(b) => b.clone(),
                None => D2Config::random(n, boost, &mut rng)?.baseline,
            };
            datasets::gen_d2(&D2Config::new(ranks, baseline, boost)?)?
        }
    };
    Ok(t.with_seed(Some(seed)))
}

fn print_points(out: &RunOutput) {
    for p in out.summary().points {
        let test = p
            .final_test_loss
            .map(|m| format!(" final_test_loss {:.6}", m.mean))
            .unwrap_or_default();
        let gd = p
            .generalization_difference
            .map(|m| format!(" generalization_difference {:.6}", m.mean))
            .unwrap_or_default();
        println!(
            "point {} value {} oe_strength {:.6} final_zeta {:.6} final_train_loss {:.6}{test}{gd} converged {}/{}",
            p.sweep_point,
            p.point_value,
            p.oe_strength.mean,
            p.final_zeta.mean,
            p.final_train_loss.mean,
            p.n_converged,
            p.n_trials
        );
    }
}

fn finish(out: RunOutput, cfg: &ExperimentConfig) -> Result<()> {
    let dir = Cli::out_dir(cfg);
    out.write_to(&dir)?;
    print_points(&out);
    println!("wrote {}", dir.display());
    Ok(())
}

/// Runs a parsed command line. `Ok(false)` means validation suites failed.
pub fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Cmd::Validate => {
            let seed = cli.seed.unwrap_or(0);
            let reports = validate::run_all(seed)?;
            let mut ok = true;
            for r in &reports {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                ok &= r.passed;
            }
            if !ok {
                let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name).collect();
                eprintln!("failed suites: {}", failed.join(", "));
            }
            Ok(ok)
        }
        Cmd::GenData(a) => {
            let mut cfg = cli.resolve()?;
            if a.dataset.n.is_none() {
                if let Some(s) = &cfg.dataset.scores {
                    cfg.n_observables = s.len();
                }
            }
            let t = gen_task_set(&cfg, cfg.dataset.seed.unwrap_or(cfg.base_seed))?;
            let path = a.out.clone().unwrap_or_else(|| Cli::out_dir(&cfg).join("tasks.json"));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, t.to_json_string())?;
            println!("oe_strength {}", datasets::oe_strength(&t)?);
            println!("wrote {} ({} tasks)", path.display(), t.len());
            Ok(true)
        }
        Cmd::SweepOe(_) => {
            let cfg = cli.resolve()?;
            finish(run::run_sweep_oe(&cfg)?, &cfg)?;
            Ok(true)
        }
        Cmd::Generalize(_) => {
            let mut cfg = cli.resolve()?;
            if cfg.train_selection == TrainSelection::All {
                cfg.train_selection = TrainSelection::Percent(vec![16.6, 33.3, 50.0]);
            }
            finish(run::run_generalize(&cfg)?, &cfg)?;
            Ok(true)
        }
        Cmd::Train(a) => {
            let mut cfg = cli.resolve()?;
            let tasks = match &a.tasks {
                Some(p) => {
                    let t = TaskSet::from_json_str(&fs::read_to_string(p)?)?;
                    if a.training.dataset.n.is_none() {
                        cfg.n_observables = t.n();
                    }
                    Some(t)
                }
                None => None,
            };
            finish(run::run_train(&cfg, tasks.as_ref())?, &cfg)?;
            Ok(true)
        }
    }
}

/// Entry point for the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("qorder").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_defaults() {
        let cli = parse(&[
            "--seed",
            "9",
            "generalize",
            "--n",
            "3",
            "--train-counts",
            "1,2",
            "--test-count",
            "4",
        ]);
        let cfg = cli.resolve().unwrap();
        assert_eq!(cfg.base_seed, 9);
        assert_eq!(cfg.n_observables, 3);
        assert_eq!(cfg.train_selection, TrainSelection::Count(vec![1, 2]));
        assert_eq!(cfg.test_selection, TestSelection::Count(4));
        assert_eq!(cfg.trials, 15);
    }

    #[test]
    fn config_file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"n_observables": 3, "epochs": 7, "trials": 2}"#).unwrap();
        let p = path.to_str().unwrap();
        let cfg = parse(&["--config", p, "train", "--epochs", "5"]).resolve().unwrap();
        assert_eq!((cfg.n_observables, cfg.epochs, cfg.trials), (3, 5, 2));
        let cfg = parse(&["train"]).resolve().unwrap();
        assert_eq!(cfg.trials, 1);
    }

    #[test]
    fn explicit_orders_parse() {
        let cli = parse(&[
            "train",
            "--n",
            "3",
            "--train-orders",
            "1,2,3;2,1,3",
            "--test-orders",
            "3,2,1",
        ]);
        let cfg = cli.resolve().unwrap();
        match cfg.train_selection {
            TrainSelection::Explicit(o) => assert_eq!(o.len(), 2),
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["qorder", "train", "--train-orders", "1,1"]).is_err());
        assert!(Cli::try_parse_from(["qorder", "gen-data", "--dataset", "d3"]).is_err());
    }

    #[test]
    fn gen_task_set_variants() {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.scores = Some(vec![0.1, 0.2]);
        let t = gen_task_set(&cfg, 0).unwrap();
        assert!((datasets::oe_strength(&t).unwrap() - 0.0099).abs() < 1e-12);

        let mut cfg = ExperimentConfig::default();
        cfg.dataset.kind = DatasetKind::D2;
        cfg.dataset.boost_percent = Some(0.0);
        assert_eq!(datasets::oe_strength(&gen_task_set(&cfg, 7).unwrap()).unwrap(), 0.0);
        cfg.dataset.boost_percent = None;
        assert!(gen_task_set(&cfg, 7).is_err());
    }
}
