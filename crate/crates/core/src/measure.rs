//! Sequential measurement of the ordered observables.
//!
//! Slot `k` of a question order applies `V(θ_{order[k]})` to the running
//! state and then measures qubit 1 in the Z basis. Nothing is undone between
//! slots. The engine keeps one sub-normalised pure state per outcome prefix
//! (a branch), so after the last slot each branch's squared norm is the exact
//! probability of its answer string.
//!
//! Answer strings are indexed with slot 1 as the most significant bit and
//! `Yes = +1 = |0> = bit 0`, so index 0 is all-Yes.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{self, AnsatzConfig, AnsatzGate, ModelParams};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, ZERO};

/// Branches whose squared norm falls below this are dropped.
pub const BRANCH_PRUNE: f64 = 1e-300;
/// Allowed deviation of a distribution's total mass from 1.
pub const NORMALIZATION_TOL: f64 = 1e-10;
/// Entries this far below zero are rounding noise and clamp to 0.
pub const NEGATIVE_TOL: f64 = 1e-12;

/// A permutation of question ids `1..=N`; entry `k` is asked in slot `k+1`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QuestionOrder(Vec<usize>);

impl QuestionOrder {
    pub fn new(ids: Vec<usize>) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(Error::InvalidOrder("empty order".into()));
        }
        let mut seen = vec![false; n];
        for &q in &ids {
            if q == 0 || q > n || seen[q - 1] {
                return Err(Error::InvalidOrder(format!("{ids:?} is not a permutation of 1..={n}")));
            }
            seen[q - 1] = true;
        }
        Ok(Self(ids))
    }

    pub fn identity(n: usize) -> Self {
        Self((1..=n).collect())
    }

    /// All `n!` orders in lexicographic order.
    pub fn all(n: usize) -> Vec<Self> {
        let mut out = Vec::new();
        let mut cur = (1..=n).collect::<Vec<_>>();
        loop {
            out.push(Self(cur.clone()));
            // next lexicographic permutation
            let Some(i) = (1..cur.len()).rev().find(|&i| cur[i - 1] < cur[i]) else {
                break;
            };
            let j = (i..cur.len()).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
        }
        out
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    /// 0-based slot in which `question` is asked.
    pub fn slot_of(&self, question: usize) -> usize {
        self.0
            .iter()
            .position(|&q| q == question)
            .expect("question not in order")
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (slot, &q) in self.0.iter().enumerate() {
            inv[q - 1] = slot + 1;
        }
        Self(inv)
    }
}

impl fmt::Display for QuestionOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|q| q.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for QuestionOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let ids = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidOrder(format!("cannot parse {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ids)
    }
}

impl Serialize for QuestionOrder {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QuestionOrder {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Whether bit `k` of an index refers to slot `k` or to question `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Indexing {
    Position,
    Question,
}

/// One measurement outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn eigenvalue(self) -> i8 {
        match self {
            Answer::Yes => 1,
            Answer::No => -1,
        }
    }

    fn bit(self) -> usize {
        match self {
            Answer::Yes => 0,
            Answer::No => 1,
        }
    }
}

/// Index of an answer string; the first answer is the most significant bit.
pub fn answer_index(answers: &[Answer]) -> usize {
    answers.iter().fold(0, |acc, a| (acc << 1) | a.bit())
}

pub fn answers_of(n: usize, index: usize) -> Vec<Answer> {
    (0..n)
        .map(|k| {
            if (index >> (n - 1 - k)) & 1 == 0 {
                Answer::Yes
            } else {
                Answer::No
            }
        })
        .collect()
}

/// Probability vector over the `2^N` answer strings.
#[derive(Clone, Debug, PartialEq)]
pub struct AnswerDistribution {
    n_questions: usize,
    indexing: Indexing,
    probs: Vec<f64>,
}

impl AnswerDistribution {
    /// Validates and clamps tiny negatives to zero.
    pub fn new(n_questions: usize, indexing: Indexing, mut probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1 << n_questions {
            return Err(Error::Dimension(format!(
                "{n_questions} questions need {} probabilities, got {}",
                1usize << n_questions,
                probs.len()
            )));
        }
        for p in probs.iter_mut() {
            if !p.is_finite() || *p < -NEGATIVE_TOL {
                return Err(Error::InvalidArgument(format!("invalid probability {p}")));
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self {
            n_questions,
            indexing,
            probs,
        })
    }

    pub fn n_questions(&self) -> usize {
        self.n_questions
    }

    pub fn indexing(&self) -> Indexing {
        self.indexing
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn prob(&self, answers: &[Answer]) -> f64 {
        self.probs[answer_index(answers)]
    }

    /// Marginal probability of `Yes` at bit `k` (0-based, most significant first).
    pub fn marginal_yes(&self, k: usize) -> f64 {
        let shift = self.n_questions - 1 - k;
        self.probs
            .iter()
            .enumerate()
            .filter(|(i, _)| (i >> shift) & 1 == 0)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn total_variation(&self, other: &AnswerDistribution) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// A sub-normalised pure state whose nonzero amplitudes are confined to
/// `offset..offset + amps.len()`.
///
/// After a qubit-1 projection only one half of the register is populated,
/// which halves the cost of the next `V` application.
#[derive(Clone, Debug)]
pub struct Branch {
    offset: usize,
    amps: Vec<Complex64>,
}

impl Branch {
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Branches indexed by outcome prefix; `None` marks a pruned branch.
pub type BranchSet = Vec<Option<Branch>>;

/// The single branch `|0...0>`.
pub fn initial_branches() -> BranchSet {
    vec![Some(Branch {
        offset: 0,
        amps: vec![Complex64::new(1.0, 0.0)],
    })]
}

/// Applies `v` to every branch and splits each on the qubit-1 outcome.
/// Child `2b` is the Yes branch of parent `b`, child `2b + 1` the No branch.
pub fn measure_slot(branches: &[Option<Branch>], v: &CMatrix) -> BranchSet {
    let dim = v.rows();
    let half = dim / 2;
    let mut out = Vec::with_capacity(2 * branches.len());
    let mut full = vec![ZERO; dim];
    for b in branches {
        let Some(b) = b else {
            out.push(None);
            out.push(None);
            continue;
        };
        for (r, f) in full.iter_mut().enumerate() {
            let row = &v.row(r)[b.offset..b.offset + b.amps.len()];
            *f = row.iter().zip(&b.amps).fold(ZERO, |acc, (x, y)| acc + x * y);
        }
        for (offset, part) in [(0, &full[..half]), (half, &full[half..])] {
            let child = Branch {
                offset,
                amps: part.to_vec(),
            };
            out.push((child.norm_sqr() >= BRANCH_PRUNE).then_some(child));
        }
    }
    out
}

pub fn branch_probabilities(branches: &[Option<Branch>]) -> Vec<f64> {
    branches
        .iter()
        .map(|b| b.as_ref().map_or(0.0, Branch::norm_sqr))
        .collect()
}

/// Dense `V(θ_n)` for every observable, indexed by question id − 1.
pub fn unitaries(cfg: &AnsatzConfig, m: &ModelParams) -> Result<Vec<CMatrix>> {
    check_model(cfg, m)?;
    m.blocks().iter().map(|p| circuit::build_unitary(cfg, p)).collect()
}

/// Runs slots `from..` of `order` starting from `branches`.
pub fn run_slots(mut branches: BranchSet, unitaries: &[CMatrix], order: &QuestionOrder, from: usize) -> BranchSet {
    for &q in &order.ids()[from..] {
        branches = measure_slot(&branches, &unitaries[q - 1]);
    }
    branches
}

/// Exact position-indexed distribution from precomputed unitaries.
pub fn distribution_from_unitaries(unitaries: &[CMatrix], order: &QuestionOrder) -> Vec<f64> {
    branch_probabilities(&run_slots(initial_branches(), unitaries, order, 0))
}

fn check_model(cfg: &AnsatzConfig, m: &ModelParams) -> Result<()> {
    if m.len() != cfg.n_observables {
        return Err(Error::Dimension(format!(
            "model has {} observables, config expects {}",
            m.len(),
            cfg.n_observables
        )));
    }
    Ok(())
}

fn check_order(cfg: &AnsatzConfig, order: &QuestionOrder) -> Result<()> {
    if order.len() != cfg.n_observables {
        return Err(Error::InvalidOrder(format!(
            "order {order} has {} entries, model has {} observables",
            order.len(),
            cfg.n_observables
        )));
    }
    Ok(())
}

/// Exact joint answer distribution (position-indexed) by branch enumeration.
pub fn joint_distribution(cfg: &AnsatzConfig, m: &ModelParams, order: &QuestionOrder) -> Result<AnswerDistribution> {
    check_order(cfg, order)?;
    let us = unitaries(cfg, m)?;
    AnswerDistribution::new(
        cfg.n_observables,
        Indexing::Position,
        distribution_from_unitaries(&us, order),
    )
}

/// Same statistics as [`joint_distribution`] from density matrices.
///
/// The state is a block-diagonal mixture `Σ_x |x><x| ⊗ ρ_x` over classical
/// outcome registers `x`; each gate acts as `G ρ_x G^dagger` and each
/// measurement replaces `ρ_x` with the dephased pair `Π± ρ_x Π±`.
pub fn dephasing_oracle(cfg: &AnsatzConfig, m: &ModelParams, order: &QuestionOrder) -> Result<AnswerDistribution> {
    check_order(cfg, order)?;
    check_model(cfg, m)?;
    let n = cfg.n_qubits;
    let dim = cfg.dim();
    let mut rho0 = CMatrix::zeros(dim, dim);
    rho0[(0, 0)] = Complex64::new(1.0, 0.0);
    let mut registers = vec![rho0];

    let proj_plus = linalg::embed_1q(&CMatrix::diag(&[1.0, 0.0]), n, 1);
    let proj_minus = linalg::embed_1q(&CMatrix::diag(&[0.0, 1.0]), n, 1);

    for &q in order.ids() {
        let angles = m.observable(q).values();
        let mut next = Vec::with_capacity(2 * registers.len());
        for mut rho in registers {
            for g in circuit::ansatz_gates(n) {
                let theta = angles[g.param()];
                let (gate, qubits) = match g {
                    AnsatzGate::Rx { qubit, .. } => (circuit::rx(theta), (qubit, None)),
                    AnsatzGate::Rz { qubit, .. } => (circuit::rz(theta), (qubit, None)),
                    AnsatzGate::Xx { qubit, .. } => (circuit::xx(theta), (qubit, Some(qubit + 1))),
                };
                rho = conjugate_by_gate(&rho, &gate, n, qubits)?;
            }
            for proj in [&proj_plus, &proj_minus] {
                next.push(linalg::matmul(&linalg::matmul(proj, &rho)?, proj)?);
            }
        }
        registers = next;
    }

    let probs = registers.iter().map(|r| r.trace().re).collect();
    AnswerDistribution::new(cfg.n_observables, Indexing::Position, probs)
}

/// `G ρ G^dagger` for a gate on one or two qubits, applied column by column
/// through the state-vector kernels.
fn conjugate_by_gate(
    rho: &CMatrix,
    gate: &CMatrix,
    n_qubits: usize,
    qubits: (usize, Option<usize>),
) -> Result<CMatrix> {
    let apply_left = |m: &CMatrix| -> Result<CMatrix> {
        let dim = m.rows();
        let mut out = CMatrix::zeros(dim, dim);
        for c in 0..dim {
            let col = (0..dim).map(|r| m[(r, c)]).collect();
            let mut s = linalg::StateVector::from_amplitudes(n_qubits, col)?;
            match qubits {
                (q, None) => s.apply_1q_gate(gate, q)?,
                (q1, Some(q2)) => s.apply_2q_gate(gate, q1, q2)?,
            }
            for (r, a) in s.amplitudes().iter().enumerate() {
                out[(r, c)] = *a;
            }
        }
        Ok(out)
    };
    // G (G ρ)^dagger = G ρ G^dagger since ρ is Hermitian.
    apply_left(&linalg::dagger(&apply_left(rho)?))
}

/// Draws `n_shots` i.i.d. answer strings by inverse CDF on the exact
/// distribution and returns the counts per index.
pub fn sample(
    cfg: &AnsatzConfig,
    m: &ModelParams,
    order: &QuestionOrder,
    n_shots: usize,
    rng: &mut impl Rng,
) -> Result<Vec<u64>> {
    if n_shots == 0 {
        return Err(Error::InvalidArgument("n_shots must be at least 1".into()));
    }
    let dist = joint_distribution(cfg, m, order)?;
    Ok(sample_from(&dist, n_shots, rng))
}

pub fn sample_from(dist: &AnswerDistribution, n_shots: usize, rng: &mut impl Rng) -> Vec<u64> {
    let mut cdf = Vec::with_capacity(dist.probs.len());
    let mut acc = 0.0;
    for p in &dist.probs {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    let last_nonzero = dist.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    let mut counts = vec![0u64; dist.probs.len()];
    for _ in 0..n_shots {
        let u = rng.gen::<f64>() * total;
        let idx = cdf.partition_point(|&c| c <= u).min(last_nonzero);
        counts[idx] += 1;
    }
    counts
}

/// Re-addresses a position-indexed distribution by question id.
pub fn canonicalize(d: &AnswerDistribution, order: &QuestionOrder) -> Result<AnswerDistribution> {
    if d.indexing == Indexing::Question {
        return Err(Error::AlreadyCanonical);
    }
    let perm = bit_permutation(d.n_questions, order)?;
    Ok(AnswerDistribution {
        n_questions: d.n_questions,
        indexing: Indexing::Question,
        probs: permute_bits(&d.probs, d.n_questions, &perm, false),
    })
}

/// Inverse of [`canonicalize`].
pub fn to_position(d: &AnswerDistribution, order: &QuestionOrder) -> Result<AnswerDistribution> {
    if d.indexing == Indexing::Position {
        return Err(Error::InvalidArgument(
            "distribution is already position-indexed".into(),
        ));
    }
    let perm = bit_permutation(d.n_questions, order)?;
    Ok(AnswerDistribution {
        n_questions: d.n_questions,
        indexing: Indexing::Position,
        probs: permute_bits(&d.probs, d.n_questions, &perm, true),
    })
}

fn bit_permutation(n: usize, order: &QuestionOrder) -> Result<Vec<usize>> {
    if order.len() != n {
        return Err(Error::InvalidOrder(format!(
            "order {order} does not match {n} questions"
        )));
    }
    Ok(order.ids().to_vec())
}

/// Slot `k` (0-based) answers question `order[k]`. Moves position bit `k` to
/// question bit `order[k] - 1`, or back when `inverse`.
fn permute_bits(probs: &[f64], n: usize, order: &[usize], inverse: bool) -> Vec<f64> {
    let mut out = vec![0.0; probs.len()];
    for (src, &p) in probs.iter().enumerate() {
        let mut dst = 0usize;
        for (slot, &q) in order.iter().enumerate() {
            let (from, to) = if inverse { (q - 1, slot) } else { (slot, q - 1) };
            let bit = (src >> (n - 1 - from)) & 1;
            dst |= bit << (n - 1 - to);
        }
        out[dst] = p;
    }
    out
}

/// Distinct question ids referenced across `orders`.
pub fn questions_in(orders: &[QuestionOrder]) -> BTreeSet<usize> {
    orders.iter().flat_map(|o| o.ids().iter().copied()).collect()
}
