//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs as a plain binary (`harness = false`).

mod common;

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use qorder::circuit::{self, AnsatzConfig, ModelParams, ObservableParams};
use qorder::datasets::{self, D2Config, DatasetKind, LikeabilityScores};
use qorder::experiment::config::DatasetSpec;
use qorder::experiment::{run, stats, validate, ExperimentConfig, RunOutput, TestSelection, TrainSelection};
use qorder::measure::{self, QuestionOrder};
use qorder::train::{self, GradMethod, TaskSplit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BASE_SEED: u64 = 20240;

type Runner = fn(&ExperimentConfig) -> qorder::Result<RunOutput>;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

fn random_model(cfg: &AnsatzConfig, rng: &mut impl Rng) -> ModelParams {
    let flat: Vec<f64> = (0..cfg.total_params()).map(|_| rng.gen_range(-PI..PI)).collect();
    ModelParams::from_flat(cfg, &flat).unwrap()
}

fn random_order(n: usize, rng: &mut impl Rng) -> QuestionOrder {
    let all = QuestionOrder::all(n);
    all[rng.gen_range(0..all.len())].clone()
}

fn c1_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED + 1);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let cfg = AnsatzConfig::new(1 + i % 3).unwrap();
        let m = random_model(&cfg, &mut rng);
        let order = random_order(cfg.n_observables, &mut rng);
        let a = measure::joint_distribution(&cfg, &m, &order).unwrap();
        let b = measure::dephasing_oracle(&cfg, &m, &order).unwrap();
        for (x, y) in a.probs().iter().zip(b.probs()) {
            worst = worst.max((x - y).abs());
        }
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-9 && t < Duration::from_secs(60),
        format!(
            "100 configs N in {{1,2,3}}: max diff {worst:.2e} (< 1e-9), {} (< 60 s)",
            secs(t)
        ),
    )
}

fn c2_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED + 2);
    let cfg = AnsatzConfig::new(2).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let m = random_model(&cfg, &mut rng);
        let order = random_order(2, &mut rng);
        let v = |q: usize| common::ansatz(2, m.observable(q).values());
        let want = common::two_question_distribution(2, &v(order.ids()[0]), &v(order.ids()[1]));
        let got = measure::joint_distribution(&cfg, &m, &order).unwrap();
        for (x, y) in got.probs().iter().zip(&want) {
            worst = worst.max((x - y).abs());
        }
    }
    outcome(worst < 1e-9, format!("50 configs N=2: max diff {worst:.2e} (< 1e-9)"))
}

fn c3_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED + 3);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let cfg = AnsatzConfig::new(1 + i % 3).unwrap();
        let m = random_model(&cfg, &mut rng);
        let targets = datasets::gen_d1(&LikeabilityScores::random(cfg.n_observables, &mut rng).unwrap()).unwrap();
        let split = TaskSplit::all_train(&targets);
        let ps = train::gradient(&cfg, &m, &targets, &split, GradMethod::ParamShift, 1e-4).unwrap();
        let fd = train::gradient(&cfg, &m, &targets, &split, GradMethod::Fd, 1e-4).unwrap();
        for (a, b) in ps.iter().zip(&fd) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(
        worst < 1e-5,
        format!("20 configs N <= 3, FD eps 1e-4: max diff {worst:.2e} (< 1e-5)"),
    )
}

/// ζ from observables rebuilt gate by gate in the test's own matrices.
fn reference_zeta(m: &ModelParams, n_qubits: usize) -> f64 {
    let z = common::z1(n_qubits);
    let qs: Vec<common::Mat> = m
        .blocks()
        .iter()
        .map(|p| {
            let v = common::ansatz(n_qubits, p.values());
            common::mul(&common::mul(&v, &z), &common::adjoint(&v))
        })
        .collect();
    let mut total = 0.0;
    for a in 0..qs.len() {
        for b in a + 1..qs.len() {
            let ab = common::mul(&qs[a], &qs[b]);
            let ba = common::mul(&qs[b], &qs[a]);
            // i[A, B] is Hermitian; its trace norm is Σ|λ|.
            let h: common::Mat = ab
                .iter()
                .zip(&ba)
                .map(|(r1, r2)| {
                    r1.iter()
                        .zip(r2)
                        .map(|(x, y)| (x - y) * num_complex::Complex64::i())
                        .collect()
                })
                .collect();
            let eig = qorder::linalg::hermitian_eigvals(&qorder::CMatrix::from_rows(&h)).unwrap();
            total += eig.iter().map(|l| l.abs()).sum::<f64>();
        }
    }
    total
}

fn c4_zeta() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED + 4);
    let cfg3 = AnsatzConfig::new(3).unwrap();
    let block = random_model(&cfg3, &mut rng).blocks()[0].clone();
    let same = circuit::zeta(&cfg3, &ModelParams::new(&cfg3, vec![block; 3]).unwrap()).unwrap();

    let cfg1 = AnsatzConfig::with_qubits(2, 1).unwrap();
    let zx = match validate::z_to_x_angles() {
        Some(a) => {
            let m = ModelParams::new(
                &cfg1,
                vec![
                    ObservableParams::zeros(&cfg1),
                    ObservableParams::new(&cfg1, a.to_vec()).unwrap(),
                ],
            )
            .unwrap();
            circuit::zeta(&cfg1, &m).unwrap()
        }
        None => f64::NAN,
    };

    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let m = random_model(&cfg3, &mut rng);
        worst = worst.max((circuit::zeta(&cfg3, &m).unwrap() - reference_zeta(&m, 3)).abs());
    }
    outcome(
        same < 1e-10 && (zx - 4.0).abs() < 1e-6 && worst < 1e-9,
        format!(
            "identical {same:.2e} (< 1e-10), {{Z, X}} {zx:.9} (4 +- 1e-6), dense N=3 max diff {worst:.2e} (< 1e-9)"
        ),
    )
}

fn sweep_config(scores: Vec<f64>, points: Vec<f64>) -> ExperimentConfig {
    ExperimentConfig {
        n_observables: 2,
        dataset: DatasetSpec {
            kind: DatasetKind::D1,
            scores: Some(scores),
            ..Default::default()
        },
        sweep_points: Some(points),
        trials: 15,
        epochs: 150,
        base_seed: BASE_SEED,
        ..Default::default()
    }
}

fn c5_zero_oe(out: &RunOutput, t: Duration) -> Outcome {
    let worst = out
        .trials
        .iter()
        .flat_map(|tr| tr.trace.records.iter().map(|r| r.zeta))
        .fold(0.0, f64::max);
    let n = out.trials.len();
    outcome(
        n == 15 && worst < 1e-6 && t < Duration::from_secs(120),
        format!(
            "{n} trials x 150 epochs: max zeta {worst:.2e} (< 1e-6), {} (< 120 s)",
            secs(t)
        ),
    )
}

fn c6_trend(out: &RunOutput, t: Duration) -> Outcome {
    let s = out.summary();
    let oe: Vec<f64> = s.points.iter().map(|p| p.oe_strength.mean).collect();
    let zeta: Vec<f64> = s.points.iter().map(|p| p.final_zeta.mean).collect();
    let rho = stats::spearman(&oe, &zeta);
    let zero = zeta[0];
    let above = zeta[1..].iter().all(|z| *z > 10.0 * zero);
    let listing: Vec<String> = oe.iter().zip(&zeta).map(|(o, z)| format!("{o:.4}:{z:.3}")).collect();
    outcome(
        oe[0] == 0.0 && rho >= 0.8 && above && t < Duration::from_secs(900),
        format!(
            "OE:mean final zeta [{}], spearman {rho:.3} (>= 0.8), nonzero points > 10x zero point {above}, {} (< 900 s)",
            listing.join(", "),
            secs(t)
        ),
    )
}

fn c7_convergence(out: &RunOutput) -> Outcome {
    let n = out.trials.iter().filter(|t| t.converged()).count();
    outcome(
        n >= 12,
        format!("final <= 10% of initial train loss in {n}/15 seeds (>= 12)"),
    )
}

fn generalize_config(n: usize, selection: TrainSelection, trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        n_observables: n,
        train_selection: selection,
        test_selection: TestSelection::Count(10),
        trials,
        epochs: 150,
        base_seed: BASE_SEED,
        ..Default::default()
    }
}

fn c8_generalization(out: &RunOutput, t: Duration) -> Outcome {
    let at5: Vec<_> = out.trials.iter().filter(|tr| tr.plan.point_value == 5.0).collect();
    let test_sizes_ok = at5.iter().all(|tr| tr.plan.split.test.len() == 1);
    let gds: Vec<f64> = at5
        .iter()
        .map(|tr| train::generalization_difference(&tr.trace).unwrap())
        .collect();
    let improved = at5
        .iter()
        .filter(|tr| tr.trace.last().test_loss.unwrap() < tr.trace.first().test_loss.unwrap())
        .count();
    let mean = stats::mean(&gds);
    outcome(
        at5.len() == 15 && test_sizes_ok && mean > 0.0 && improved >= 11 && t < Duration::from_secs(600),
        format!(
            "N=3, 5 train / 1 test: mean generalization difference {mean:.4} (> 0), improved {improved}/15 (>= 11), sweep {} (< 600 s)",
            secs(t)
        ),
    )
}

fn c9_trend(out: &RunOutput) -> Outcome {
    let s = out.summary();
    let gd: Vec<f64> = s
        .points
        .iter()
        .map(|p| p.generalization_difference.map_or(f64::NAN, |m| m.mean))
        .collect();
    let inversions = gd.windows(2).filter(|w| w[1].is_nan() || w[1] < w[0]).count();
    let listing: Vec<String> = gd.iter().map(|g| format!("{g:.4}")).collect();
    outcome(
        gd.len() == 5 && inversions <= 1,
        format!(
            "N=3, train counts 1..5: mean generalization difference [{}], {inversions} inversions (<= 1)",
            listing.join(", ")
        ),
    )
}

/// Structural checks on written artifacts.
fn artifacts_valid(dir: &Path, expected_rows: usize) -> Result<(), String> {
    let csv = fs::read_to_string(dir.join("trace.csv")).map_err(|e| e.to_string())?;
    let mut lines = csv.lines();
    if lines.next() != Some(run::TRACE_HEADER) {
        return Err("bad trace header".into());
    }
    let mut rows = 0;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(format!("bad row {line}"));
        }
        for v in [cols[3], cols[4], cols[5]] {
            let x: f64 = v.parse().map_err(|_| format!("bad value in {line}"))?;
            if !x.is_finite() {
                return Err(format!("non-finite value in {line}"));
            }
        }
        rows += 1;
    }
    if rows != expected_rows {
        return Err(format!("{rows} rows, expected {expected_rows}"));
    }
    for f in ["summary.json", "manifest.json"] {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join(f)).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        if v["schema_version"] != 1 {
            return Err(format!("{f} lacks schema_version"));
        }
    }
    Ok(())
}

fn c10_scaling(n4: &RunOutput, t4: Duration, n5_dir: &Path, n5: &RunOutput, t5: Duration) -> Outcome {
    let s = n4.summary();
    let test: Vec<f64> = s
        .points
        .iter()
        .map(|p| p.final_test_loss.map_or(f64::NAN, |m| m.mean))
        .collect();
    let nonincreasing = test.windows(2).all(|w| w[1] <= w[0]);
    let listing: Vec<String> = test.iter().map(|x| format!("{x:.4}")).collect();
    let expected_rows = n5.trials.len() * (n5.config.epochs + 1);
    let n5_ok = artifacts_valid(n5_dir, expected_rows);
    let n5_msg = match &n5_ok {
        Ok(()) => "valid".to_string(),
        Err(e) => format!("invalid: {e}"),
    };
    outcome(
        test.len() == 3 && nonincreasing && t4 < Duration::from_secs(2700) && n5_ok.is_ok(),
        format!(
            "N=4 at 16.6/33.3/50%: mean final test loss [{}] nonincreasing {nonincreasing}, {} (< 2700 s); N=5 artifacts ({} trials) {n5_msg}, {}",
            listing.join(", "),
            secs(t4),
            n5.trials.len(),
            secs(t5)
        ),
    )
}

fn c11_datasets() -> Outcome {
    let t = datasets::gen_d1(&LikeabilityScores::new(vec![0.1, 0.2]).unwrap()).unwrap();
    let got = t.get(&QuestionOrder::identity(2)).unwrap().probs().to_vec();
    let want = [0.015, 0.085, 0.135, 0.765];
    let worst = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let oe = datasets::oe_strength(&t).unwrap();

    let mut ok_d2 = true;
    let mut zero = f64::NAN;
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED + 11);
    for n in 2..=4 {
        for _ in 0..5 {
            let baseline: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.6)).collect();
            let mut last = f64::NEG_INFINITY;
            for x in (0..=90).step_by(10) {
                let cfg = D2Config::new((1..=n).collect(), baseline.clone(), x as f64).unwrap();
                let v = datasets::oe_strength(&datasets::gen_d2(&cfg).unwrap()).unwrap();
                if x == 0 {
                    zero = if zero.is_nan() { v } else { zero.max(v) };
                }
                ok_d2 &= v > last;
                last = v;
            }
        }
    }
    outcome(
        worst <= 4.0 * f64::EPSILON && (oe - 0.0099).abs() < 1e-12 && zero == 0.0 && ok_d2,
        format!(
            "D1 (1,2) {got:?} max diff {worst:.1e} (float rounding only), OE {oe} (0.0099 +- 1e-12), D2 x=0 OE {zero}, D2 strictly increasing over 15 baselines {ok_d2}"
        ),
    )
}

fn write_and_read(out: &RunOutput, dir: &Path) -> Vec<Vec<u8>> {
    out.write_to(dir).unwrap();
    ["trace.csv", "summary.json", "manifest.json"]
        .iter()
        .map(|f| fs::read(dir.join(f)).unwrap())
        .collect()
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "oracle equivalence", c1_oracle()),
        (2, "closed-form two-question distribution", c2_closed_form()),
        (3, "gradient correctness", c3_gradient()),
        (4, "zeta anchors", c4_zeta()),
    ];

    let timed = |cfg: &ExperimentConfig, f: Runner| {
        let start = Instant::now();
        let out = f(cfg).unwrap();
        (out, start.elapsed())
    };

    let zero_cfg = sweep_config(vec![0.1, 0.1], vec![0.1]);
    let (zero_out, t5) = timed(&zero_cfg, run::run_sweep_oe);
    results.push((5, "zero order effect keeps zeta at zero", c5_zero_oe(&zero_out, t5)));

    let trend_cfg = sweep_config(vec![0.1, 0.1], vec![0.1, 0.2, 0.3, 0.4, 0.5]);
    let (trend_out, t6) = timed(&trend_cfg, run::run_sweep_oe);
    results.push((6, "zeta grows with order-effect strength", c6_trend(&trend_out, t6)));

    let conv_cfg = sweep_config(vec![0.1, 0.2], vec![0.2]);
    let (conv_out, _) = timed(&conv_cfg, run::run_sweep_oe);
    results.push((7, "convergence", c7_convergence(&conv_out)));

    let gen_cfg = generalize_config(3, TrainSelection::Count(vec![1, 2, 3, 4, 5]), 15);
    let (gen_out, t8) = timed(&gen_cfg, run::run_generalize);
    results.push((8, "out-of-task generalization", c8_generalization(&gen_out, t8)));
    results.push((9, "generalization grows with train orders", c9_trend(&gen_out)));

    let n4_cfg = generalize_config(4, TrainSelection::Percent(vec![16.6, 33.3, 50.0]), 15);
    let (n4_out, t10) = timed(&n4_cfg, run::run_generalize);
    // N=5 carries no trend assertion; one trial per percentage keeps it short.
    let n5_cfg = generalize_config(5, TrainSelection::Percent(vec![16.6, 33.3, 50.0]), 1);
    let (n5_out, t10b) = timed(&n5_cfg, run::run_generalize);
    let n5_dir = tmp.path().join("n5");
    n5_out.write_to(&n5_dir).unwrap();
    results.push((
        10,
        "N=4 test loss falls with more tasks",
        c10_scaling(&n4_out, t10, &n5_dir, &n5_out, t10b),
    ));

    results.push((11, "dataset anchors", c11_datasets()));

    // Rerun every training experiment from scratch, once on a single worker,
    // and compare the written bytes.
    let mut identical = true;
    let mut compared = 0;
    let runs: Vec<(&str, &ExperimentConfig, &RunOutput, Runner)> = vec![
        ("zero-oe", &zero_cfg, &zero_out, run::run_sweep_oe),
        ("sweep", &trend_cfg, &trend_out, run::run_sweep_oe),
        ("convergence", &conv_cfg, &conv_out, run::run_sweep_oe),
        ("generalize-n3", &gen_cfg, &gen_out, run::run_generalize),
        ("generalize-n4", &n4_cfg, &n4_out, run::run_generalize),
    ];
    for (name, cfg, first, f) in runs {
        let single = ExperimentConfig {
            jobs: Some(1),
            ..(*cfg).clone()
        };
        let again = f(&single).unwrap();
        let a = write_and_read(first, &tmp.path().join(format!("{name}-a")));
        let b = write_and_read(&again, &tmp.path().join(format!("{name}-b")));
        identical &= a == b;
        compared += a.len();
    }
    results.push((
        12,
        "determinism",
        outcome(
            identical,
            format!("{compared} files from 5 experiments rerun with one worker: byte-identical {identical}"),
        ),
    ));

    let mut all = true;
    for (id, name, o) in &results {
        println!(
            "criterion {id:>2} {} {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        all &= o.passed;
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
