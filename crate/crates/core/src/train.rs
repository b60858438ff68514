//! Multi-task LMS training with Adam.
//!
//! The objective is the sum over training orders of the squared distance
//! between the model's exact position-indexed distribution and the target.
//! Logged losses are per-task means so runs with different split sizes are
//! comparable.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{self, AnsatzConfig, ModelParams, ObservableParams};
use crate::datasets::TaskSet;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::measure::{self, AnswerDistribution, BranchSet, QuestionOrder};
use crate::par;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradMethod {
    /// Central finite differences.
    Fd,
    /// Exact two-term shift rule.
    #[default]
    ParamShift,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// One random block copied to every observable.
    #[default]
    IdenticalRandom,
    IndependentRandom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub grad_method: GradMethod,
    pub fd_epsilon: f64,
    pub init_mode: InitMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 150,
            grad_method: GradMethod::ParamShift,
            fd_epsilon: 1e-4,
            init_mode: InitMode::IdenticalRandom,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.fd_epsilon.is_nan() || self.fd_epsilon <= 0.0 {
            return Err(Error::InvalidArgument("fd_epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Moment estimates of Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(state: &AdamState, params: &[f64], grads: &[f64], tc: &TrainConfig) -> Result<(Vec<f64>, AdamState)> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    let t = state.t + 1;
    let bc1 = 1.0 - tc.beta1.powi(t as i32);
    let bc2 = 1.0 - tc.beta2.powi(t as i32);
    let mut next = AdamState {
        m: Vec::with_capacity(params.len()),
        v: Vec::with_capacity(params.len()),
        t,
    };
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let g = grads[i];
        let m = tc.beta1 * state.m[i] + (1.0 - tc.beta1) * g;
        let v = tc.beta2 * state.v[i] + (1.0 - tc.beta2) * g * g;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        out.push(params[i] - tc.learning_rate * m_hat / (v_hat.sqrt() + tc.epsilon));
        next.m.push(m);
        next.v.push(v);
    }
    Ok((out, next))
}

/// Disjoint train and test orders.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSplit {
    pub train: Vec<QuestionOrder>,
    pub test: Vec<QuestionOrder>,
}

impl TaskSplit {
    pub fn new(train: Vec<QuestionOrder>, test: Vec<QuestionOrder>) -> Result<Self> {
        if let Some(o) = train.iter().find(|o| test.contains(o)) {
            return Err(Error::InvalidArgument(format!("order {o} is in both train and test")));
        }
        for set in [&train, &test] {
            for (i, o) in set.iter().enumerate() {
                if set[..i].contains(o) {
                    return Err(Error::InvalidArgument(format!("order {o} listed twice")));
                }
            }
        }
        Ok(Self { train, test })
    }

    /// Train on every order, no test set.
    pub fn all_train(targets: &TaskSet) -> Self {
        Self {
            train: targets.orders(),
            test: Vec::new(),
        }
    }
}

/// Sum over orders and answer strings of squared differences.
pub fn lms_loss(
    model: &BTreeMap<QuestionOrder, AnswerDistribution>,
    targets: &BTreeMap<QuestionOrder, AnswerDistribution>,
) -> Result<f64> {
    if model.len() != targets.len() || model.keys().any(|k| !targets.contains_key(k)) {
        return Err(Error::KeyMismatch("model and target orders differ".into()));
    }
    let mut total = 0.0;
    for (order, p) in model {
        let t = &targets[order];
        if p.indexing() != t.indexing() || p.probs().len() != t.probs().len() {
            return Err(Error::KeyMismatch(format!("order {order}: incompatible distributions")));
        }
        total += squared_distance(p.probs(), t.probs());
    }
    Ok(total)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Target vectors for a list of orders.
fn target_vectors(targets: &TaskSet, orders: &[QuestionOrder]) -> Result<Vec<Vec<f64>>> {
    orders
        .iter()
        .map(|o| {
            targets
                .get(o)
                .map(|d| d.probs().to_vec())
                .ok_or_else(|| Error::KeyMismatch(format!("order {o} not in task set")))
        })
        .collect()
}

/// Summed LMS loss of `orders` under fixed unitaries.
fn loss_with(unitaries: &[CMatrix], orders: &[QuestionOrder], targets: &[Vec<f64>]) -> f64 {
    orders
        .iter()
        .zip(targets)
        .map(|(o, t)| squared_distance(&measure::distribution_from_unitaries(unitaries, o), t))
        .sum()
}

/// The training objective bound to a model shape and a set of orders.
struct Objective<'a> {
    cfg: &'a AnsatzConfig,
    orders: &'a [QuestionOrder],
    targets: Vec<Vec<f64>>,
}

impl<'a> Objective<'a> {
    fn new(cfg: &'a AnsatzConfig, targets: &TaskSet, orders: &'a [QuestionOrder]) -> Result<Self> {
        if targets.n() != cfg.n_observables {
            return Err(Error::Dimension(format!(
                "task set has {} questions, model has {} observables",
                targets.n(),
                cfg.n_observables
            )));
        }
        Ok(Self {
            cfg,
            orders,
            targets: target_vectors(targets, orders)?,
        })
    }

    fn loss(&self, m: &ModelParams) -> Result<f64> {
        Ok(loss_with(&measure::unitaries(self.cfg, m)?, self.orders, &self.targets))
    }

    fn gradient(&self, m: &ModelParams, method: GradMethod, fd_epsilon: f64) -> Result<(f64, Vec<f64>)> {
        match method {
            GradMethod::Fd => self.fd_gradient(m, fd_epsilon),
            GradMethod::ParamShift => self.shift_gradient(m),
        }
    }

    fn fd_gradient(&self, m: &ModelParams, eps: f64) -> Result<(f64, Vec<f64>)> {
        let loss = self.loss(m)?;
        let flat = m.to_flat();
        let grads = par::map_range(flat.len(), |i| {
            let eval = |delta: f64| {
                let mut shifted = flat.clone();
                shifted[i] += delta;
                let m = ModelParams::from_flat(self.cfg, &shifted).expect("shape unchanged");
                self.loss(&m).expect("validated model")
            };
            (eval(eps) - eval(-eps)) / (2.0 * eps)
        });
        Ok((loss, grads))
    }

    /// Parameter-shift gradient. Each angle enters exactly one gate of one
    /// observable, and that observable occupies exactly one slot per order,
    /// so branches up to that slot are shared by all of its shifts.
    fn shift_gradient(&self, m: &ModelParams) -> Result<(f64, Vec<f64>)> {
        let cfg = self.cfg;
        let unitaries = measure::unitaries(cfg, m)?;
        let n = cfg.n_observables;

        // prefixes[y][k]: branches entering slot k of order y.
        let mut prefixes: Vec<Vec<BranchSet>> = Vec::with_capacity(self.orders.len());
        let mut residuals: Vec<Vec<f64>> = Vec::with_capacity(self.orders.len());
        let mut loss = 0.0;
        for (order, target) in self.orders.iter().zip(&self.targets) {
            let mut slots = Vec::with_capacity(n + 1);
            let mut b = measure::initial_branches();
            for &q in order.ids() {
                let next = measure::measure_slot(&b, &unitaries[q - 1]);
                slots.push(b);
                b = next;
            }
            let probs = measure::branch_probabilities(&b);
            loss += squared_distance(&probs, target);
            residuals.push(probs.iter().zip(target).map(|(p, t)| 2.0 * (p - t)).collect());
            prefixes.push(slots);
        }

        let per_obs = cfg.params_per_observable();
        let grads = par::map_range(cfg.total_params(), |idx| {
            let (obs, j) = (idx / per_obs, idx % per_obs);
            let question = obs + 1;
            let shifted_unitary = |delta: f64| {
                let mut angles = m.blocks()[obs].values().to_vec();
                angles[j] += delta;
                circuit::build_unitary_unchecked(cfg.n_qubits, &angles)
            };
            let plus = shifted_unitary(FRAC_PI_2);
            let minus = shifted_unitary(-FRAC_PI_2);
            let mut g = 0.0;
            for (y, order) in self.orders.iter().enumerate() {
                let k = order.slot_of(question);
                let finish = |v: &CMatrix| {
                    let after = measure::measure_slot(&prefixes[y][k], v);
                    measure::branch_probabilities(&measure::run_slots(after, &unitaries, order, k + 1))
                };
                let (pp, pm) = (finish(&plus), finish(&minus));
                g += residuals[y]
                    .iter()
                    .zip(pp.iter().zip(&pm))
                    .map(|(r, (a, b))| r * (a - b) / 2.0)
                    .sum::<f64>();
            }
            g
        });
        Ok((loss, grads))
    }
}

/// Gradient of the summed training loss over `split.train`.
pub fn gradient(
    cfg: &AnsatzConfig,
    m: &ModelParams,
    targets: &TaskSet,
    split: &TaskSplit,
    method: GradMethod,
    fd_epsilon: f64,
) -> Result<Vec<f64>> {
    if split.train.is_empty() {
        return Err(Error::InvalidArgument("no training orders".into()));
    }
    Objective::new(cfg, targets, &split.train)?
        .gradient(m, method, fd_epsilon)
        .map(|(_, g)| g)
}

/// Metrics after a given number of optimizer steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean LMS loss per training order.
    pub train_loss: f64,
    /// Mean LMS loss per test order; `None` without a test set.
    pub test_loss: Option<f64>,
    pub zeta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub records: Vec<EpochRecord>,
    pub final_params: ModelParams,
}

impl TrainingTrace {
    pub fn first(&self) -> &EpochRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &EpochRecord {
        self.records.last().expect("trace has at least one record")
    }
}

/// Initial parameters, uniform in `[-π, π)`.
pub fn init_params(cfg: &AnsatzConfig, mode: InitMode, rng: &mut impl Rng) -> ModelParams {
    let mut draw = || {
        let v = (0..cfg.params_per_observable())
            .map(|_| rng.gen_range(-PI..PI))
            .collect();
        ObservableParams::new(cfg, v).expect("sized for cfg")
    };
    let blocks = match mode {
        InitMode::IdenticalRandom => vec![draw(); cfg.n_observables],
        InitMode::IndependentRandom => (0..cfg.n_observables).map(|_| draw()).collect(),
    };
    ModelParams::new(cfg, blocks).expect("sized for cfg")
}

/// Full-batch Adam training for `tc.epochs` steps, logging metrics before the
/// first step and after every step.
pub fn train_run(cfg: &AnsatzConfig, tc: &TrainConfig, targets: &TaskSet, split: &TaskSplit) -> Result<TrainingTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let init = init_params(cfg, tc.init_mode, &mut rng);
    train_from(cfg, tc, targets, split, init)
}

/// Like [`train_run`] from explicit starting parameters.
pub fn train_from(
    cfg: &AnsatzConfig,
    tc: &TrainConfig,
    targets: &TaskSet,
    split: &TaskSplit,
    init: ModelParams,
) -> Result<TrainingTrace> {
    tc.validate()?;
    if split.train.is_empty() {
        return Err(Error::InvalidArgument("no training orders".into()));
    }
    let split = TaskSplit::new(split.train.clone(), split.test.clone())?;
    let train = Objective::new(cfg, targets, &split.train)?;
    let test = Objective::new(cfg, targets, &split.test)?;
    let n_train = split.train.len() as f64;
    let n_test = split.test.len() as f64;

    let mut params = init;
    let mut adam = AdamState::new(cfg.total_params());
    let mut records = Vec::with_capacity(tc.epochs + 1);
    for epoch in 0..=tc.epochs {
        let zeta = circuit::zeta(cfg, &params)?;
        let test_loss = if split.test.is_empty() {
            None
        } else {
            Some(test.loss(&params)? / n_test)
        };
        let train_loss = if epoch < tc.epochs {
            let (loss, grads) = train.gradient(&params, tc.grad_method, tc.fd_epsilon)?;
            let (next, state) = adam_step(&adam, &params.to_flat(), &grads, tc)?;
            params = ModelParams::from_flat(cfg, &next)?;
            adam = state;
            loss
        } else {
            train.loss(&params)?
        };
        records.push(EpochRecord {
            epoch,
            train_loss: train_loss / n_train,
            test_loss,
            zeta,
        });
    }
    Ok(TrainingTrace {
        records,
        final_params: params,
    })
}

/// Epoch-0 test loss minus final test loss.
pub fn generalization_difference(trace: &TrainingTrace) -> Result<f64> {
    match (trace.first().test_loss, trace.last().test_loss) {
        (Some(start), Some(end)) => Ok(start - end),
        _ => Err(Error::InvalidArgument("trace has no test losses".into())),
    }
}

/// Exact position-indexed model distributions for `orders`.
pub fn model_distributions(
    cfg: &AnsatzConfig,
    m: &ModelParams,
    orders: &[QuestionOrder],
) -> Result<BTreeMap<QuestionOrder, AnswerDistribution>> {
    let us = measure::unitaries(cfg, m)?;
    orders
        .iter()
        .map(|o| {
            let d = AnswerDistribution::new(
                cfg.n_observables,
                measure::Indexing::Position,
                measure::distribution_from_unitaries(&us, o),
            )?;
            Ok((o.clone(), d))
        })
        .collect()
}
