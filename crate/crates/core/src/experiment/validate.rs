//! Self-checks behind `qorder validate`. Each suite compares the fast paths
//! against an independent computation or a known value.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::circuit::{self, AnsatzConfig, AnsatzGate, ModelParams, ObservableParams};
use crate::datasets::{self, D2Config, LikeabilityScores};
use crate::error::Result;
use crate::linalg::{self, CMatrix};
use crate::measure::{self, QuestionOrder};
use crate::train::{self, GradMethod, TaskSplit};

pub const ORACLE_TOL: f64 = 1e-9;
pub const GRADIENT_TOL: f64 = 1e-5;
pub const FD_EPSILON: f64 = 1e-4;
pub const ZETA_ZERO_TOL: f64 = 1e-10;
pub const ZETA_ANCHOR_TOL: f64 = 1e-6;
pub const ZETA_DENSE_TOL: f64 = 1e-9;
pub const OE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn report(name: &'static str, passed: bool, detail: String) -> SuiteReport {
    SuiteReport { name, passed, detail }
}

pub fn random_model(cfg: &AnsatzConfig, rng: &mut impl Rng) -> ModelParams {
    let flat: Vec<f64> = (0..cfg.total_params()).map(|_| rng.gen_range(-PI..PI)).collect();
    ModelParams::from_flat(cfg, &flat).expect("sized for cfg")
}

fn random_order(n: usize, rng: &mut impl Rng) -> QuestionOrder {
    let all = QuestionOrder::all(n);
    all[rng.gen_range(0..all.len())].clone()
}

/// Branch enumeration against the density-matrix dephasing simulation.
pub fn oracle_agreement(n_configs: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..n_configs {
        let cfg = AnsatzConfig::new(1 + i % 3)?;
        let m = random_model(&cfg, &mut rng);
        let order = random_order(cfg.n_observables, &mut rng);
        let fast = measure::joint_distribution(&cfg, &m, &order)?;
        let slow = measure::dephasing_oracle(&cfg, &m, &order)?;
        for (a, b) in fast.probs().iter().zip(slow.probs()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(report(
        "seqmeas-vs-dephasing",
        worst < ORACLE_TOL,
        format!("{n_configs} configs, N <= 3, max abs diff {worst:.3e} (tol {ORACLE_TOL:e})"),
    ))
}

/// Parameter-shift gradients against central finite differences.
pub fn gradient_agreement(n_configs: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..n_configs {
        let cfg = AnsatzConfig::new(1 + i % 3)?;
        let m = random_model(&cfg, &mut rng);
        let targets = datasets::gen_d1(&LikeabilityScores::random(cfg.n_observables, &mut rng)?)?;
        let split = TaskSplit::all_train(&targets);
        let ps = train::gradient(&cfg, &m, &targets, &split, GradMethod::ParamShift, FD_EPSILON)?;
        let fd = train::gradient(&cfg, &m, &targets, &split, GradMethod::Fd, FD_EPSILON)?;
        for (a, b) in ps.iter().zip(&fd) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(report(
        "param-shift-vs-fd",
        worst < GRADIENT_TOL,
        format!("{n_configs} configs, N <= 3, max abs diff {worst:.3e} (tol {GRADIENT_TOL:e})"),
    ))
}

/// One-qubit angles with `V Z V^dagger = X`, searched over quarter turns.
pub fn z_to_x_angles() -> Option<[f64; 3]> {
    let cfg = AnsatzConfig::with_qubits(1, 1).ok()?;
    let grid = [-PI, -FRAC_PI_2, 0.0, FRAC_PI_2, PI];
    for a in grid {
        for b in grid {
            for c in grid {
                let p = ObservableParams::new(&cfg, vec![a, b, c]).ok()?;
                let q = circuit::observable_matrix(&cfg, &p).ok()?;
                if q.max_abs_diff(&CMatrix::pauli_x()) < 1e-12 {
                    return Some([a, b, c]);
                }
            }
        }
    }
    None
}

/// `V` as a product of full-register gate matrices.
pub fn dense_unitary(cfg: &AnsatzConfig, p: &ObservableParams) -> Result<CMatrix> {
    let n = cfg.n_qubits;
    let mut u = CMatrix::identity(cfg.dim());
    for g in circuit::ansatz_gates(n) {
        let theta = p.values()[g.param()];
        let full = match g {
            AnsatzGate::Rx { qubit, .. } => linalg::embed_1q(&circuit::rx(theta), n, qubit),
            AnsatzGate::Rz { qubit, .. } => linalg::embed_1q(&circuit::rz(theta), n, qubit),
            AnsatzGate::Xx { qubit, .. } => {
                let left = CMatrix::identity(1 << (qubit - 1));
                let right = CMatrix::identity(1 << (n - qubit - 1));
                linalg::kron(&linalg::kron(&left, &circuit::xx(theta)), &right)
            }
        };
        u = linalg::matmul(&full, &u)?;
    }
    Ok(u)
}

/// ζ from dense observables, with each trace norm taken as the sum of
/// `|λ|` over the spectrum of the Hermitian matrix `i[A, B]`.
pub fn dense_zeta(cfg: &AnsatzConfig, m: &ModelParams) -> Result<f64> {
    let d = circuit::diagonal_observable(cfg.n_qubits);
    let qs = m
        .blocks()
        .iter()
        .map(|p| {
            let v = dense_unitary(cfg, p)?;
            linalg::matmul(&linalg::matmul(&v, &d)?, &linalg::dagger(&v))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for a in 0..qs.len() {
        for b in a + 1..qs.len() {
            let c = linalg::commutator(&qs[a], &qs[b])?.scale(linalg::I);
            total += linalg::hermitian_eigvals(&c)?.iter().map(|l| l.abs()).sum::<f64>();
        }
    }
    Ok(total)
}

pub fn zeta_anchors(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut notes = Vec::new();
    let mut ok = true;

    let cfg3 = AnsatzConfig::new(3)?;
    let block = random_model(&cfg3, &mut rng).blocks()[0].clone();
    let same = ModelParams::new(&cfg3, vec![block; 3])?;
    let z_same = circuit::zeta(&cfg3, &same)?;
    ok &= z_same < ZETA_ZERO_TOL;
    notes.push(format!("identical {z_same:.3e}"));

    match z_to_x_angles() {
        Some(angles) => {
            let cfg = AnsatzConfig::with_qubits(2, 1)?;
            let m = ModelParams::new(
                &cfg,
                vec![
                    ObservableParams::zeros(&cfg),
                    ObservableParams::new(&cfg, angles.to_vec())?,
                ],
            )?;
            let z = circuit::zeta(&cfg, &m)?;
            ok &= (z - 4.0).abs() < ZETA_ANCHOR_TOL;
            notes.push(format!("{{Z, X}} {z:.12}"));
        }
        None => {
            ok = false;
            notes.push("no Z to X angles found".into());
        }
    }

    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let m = random_model(&cfg3, &mut rng);
        worst = worst.max((circuit::zeta(&cfg3, &m)? - dense_zeta(&cfg3, &m)?).abs());
    }
    ok &= worst < ZETA_DENSE_TOL;
    notes.push(format!("dense N=3 max diff {worst:.3e}"));
    Ok(report("zeta-anchors", ok, notes.join(", ")))
}

pub fn dataset_anchors() -> Result<SuiteReport> {
    let mut ok = true;
    let mut notes = Vec::new();

    let t = datasets::gen_d1(&LikeabilityScores::new(vec![0.1, 0.2])?)?;
    let got = t
        .get(&QuestionOrder::identity(2))
        .map(|d| d.probs().to_vec())
        .unwrap_or_default();
    let want = [0.015, 0.085, 0.135, 0.765];
    let exact = got.len() == 4 && got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-15);
    ok &= exact;
    notes.push(format!("D1 (1,2) {got:?}"));
    let oe = datasets::oe_strength(&t)?;
    ok &= (oe - 0.0099).abs() < OE_TOL;
    notes.push(format!("D1 OE {oe}"));

    let baseline = vec![0.3, 0.5, 0.2];
    let mut last = -1.0;
    let mut increasing = true;
    for x in (0..=90).step_by(10) {
        let cfg = D2Config::new(vec![1, 2, 3], baseline.clone(), x as f64)?;
        let oe = datasets::oe_strength(&datasets::gen_d2(&cfg)?)?;
        if x == 0 {
            ok &= oe == 0.0;
            notes.push(format!("D2 x=0 OE {oe}"));
        }
        increasing &= oe > last;
        last = oe;
    }
    ok &= increasing;
    notes.push(format!("D2 strictly increasing {increasing}"));
    Ok(report("dataset-anchors", ok, notes.join(", ")))
}

/// Every suite, with the sizes used by `qorder validate`.
pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        oracle_agreement(100, seed)?,
        gradient_agreement(20, seed.wrapping_add(1))?,
        zeta_anchors(seed.wrapping_add(2))?,
        dataset_anchors()?,
    ])
}
