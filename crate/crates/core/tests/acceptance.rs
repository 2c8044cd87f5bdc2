//! Acceptance suite: campaign-level requirements, one test per criterion.
//! Each test prints a `criterion N (<name>): PASS/FAIL` line with the
//! measured values (visible with `--nocapture`).
//!
//! Campaigns are pinned to fixed master seeds, so every number asserted
//! here is a deterministic regression value, not a flaky sample.

use ffc_core::belief::Belief;
use ffc_core::controller::{ControllerMode, TrialOutcome};
use ffc_core::experiment::{
    compute_metrics, mae_all_trials, run_experiment, run_trials, MatrixSource, RunConfig,
};
use ffc_core::matrix::{self, PerceptionMatrix};
use ffc_core::perception::{
    accuracy, estimate_confusion, extract_features, generate_dataset, loss_and_gradient,
    split_stratified, train_classifier, write_model, ClassifierModel, LabeledSample, TrainConfig,
    FEATURE_COUNT,
};
use ffc_core::sim::{grid_positions, ScriptedWorld, SensorMode, Trajectory, TrajectoryParams};
use ffc_core::space::{PerceptSignal, Status, StatusSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn seven() -> StatusSpace {
    StatusSpace::default_seven()
}

fn verdict(criterion: &str, pass: bool, detail: &str) -> bool {
    println!(
        "criterion {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn matched_campaign(trials: u64, seed: u64) -> RunConfig {
    RunConfig {
        trials,
        master_seed: seed,
        ..RunConfig::default()
    }
}

/// Reference update: explicit product-and-normalize loop.
fn naive_update(prior: &[f64], matrix: &PerceptionMatrix, z: i32) -> Vec<f64> {
    let weighted: Vec<f64> = prior
        .iter()
        .enumerate()
        .map(|(i, p)| matrix.likelihood(Status(i as i32 - 3), PerceptSignal(z)) * p)
        .collect();
    let eta: f64 = weighted.iter().sum();
    weighted.into_iter().map(|w| w / eta).collect()
}

#[test]
fn criterion_1_measurement_update_matches_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let prior: Vec<f64> = (0..7).map(|_| rng.gen_range(0.001..1.0)).collect();
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|_| {
                let row: Vec<f64> = (0..7).map(|_| rng.gen_range(0.001..1.0)).collect();
                let sum: f64 = row.iter().sum();
                row.into_iter().map(|p| p / sum).collect()
            })
            .collect();
        let m = PerceptionMatrix::new(seven(), rows).unwrap();
        let z = rng.gen_range(-3..=3);

        let b = Belief::from_probs(seven(), prior.clone()).unwrap();
        let fast = b.measurement_update(PerceptSignal(z), &m).unwrap();
        let slow = naive_update(&prior, &m, z);
        for (x, y) in fast.probs().iter().zip(&slow) {
            worst = worst.max((x - y).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst < 1e-12 && elapsed.as_secs_f64() < 1.0;
    assert!(
        verdict(
            "1 (measurement-update oracle equivalence)",
            pass,
            &format!("1000 random triples, worst |diff| {worst:.2e}, {elapsed:?}")
        ),
        "worst diff {worst:.2e}, elapsed {elapsed:?}"
    );
}

#[test]
fn criterion_2_two_confirmations_before_stopping() {
    let cfg = ffc_core::controller::ControllerConfig::default();
    let matrix = matrix::default_perception_matrix();
    let mut world = ScriptedWorld::new(seven(), 0.0, vec![PerceptSignal(0)]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let log = ffc_core::controller::run_memory_controller(
        &mut world,
        &matrix,
        &cfg,
        Default::default(),
        None,
        &mut rng,
    )
    .unwrap();

    let gammas: Vec<f64> = log.records.iter().map(|r| r.reliability).collect();
    let pass = gammas.len() == 2
        && (gammas[0] - 0.981463).abs() < 1e-6
        && (gammas[1] - 0.999643).abs() < 1e-6
        && log.stop_iteration == Some(1)
        && log.outcome == TrialOutcome::StoppedSuccess;
    assert!(
        verdict(
            "2 (two-confirmation stop)",
            pass,
            &format!(
                "gamma sequence {:?}, stop at {:?}",
                gammas, log.stop_iteration
            )
        ),
        "gammas {gammas:?}, stop {:?}",
        log.stop_iteration
    );
}

#[test]
fn criterion_3_matched_model_calibration() {
    let start = Instant::now();
    let logs = run_trials(&matched_campaign(10_000, 42), ControllerMode::Memory, 0).unwrap();
    let elapsed = start.elapsed();

    let wrong = logs
        .iter()
        .filter(|l| l.outcome == TrialOutcome::StoppedFailure)
        .count();
    let capped = logs
        .iter()
        .filter(|l| l.outcome == TrialOutcome::MaxItersReached)
        .count();
    let wrong_rate = wrong as f64 / logs.len() as f64;

    let paper100 = run_trials(&matched_campaign(100, 42), ControllerMode::Memory, 0).unwrap();
    let successes = paper100
        .iter()
        .filter(|l| l.outcome == TrialOutcome::StoppedSuccess)
        .count();

    let pass =
        wrong_rate <= 0.003 && capped == 0 && elapsed.as_secs_f64() < 30.0 && successes == 100;
    assert!(
        verdict(
            "3 (matched-model calibration)",
            pass,
            &format!(
                "10000 trials: wrong stops {wrong} ({:.3}%), capped {capped}, {elapsed:.2?}; \
                 100-trial preset: {successes}/100 success",
                100.0 * wrong_rate
            )
        ),
        "wrong rate {wrong_rate}, capped {capped}, preset {successes}/100"
    );
}

#[test]
fn criterion_4_baseline_failure_reproduction() {
    let logs = run_trials(&matched_campaign(10_000, 42), ControllerMode::Memoryless, 0).unwrap();
    let wrong = logs
        .iter()
        .filter(|l| l.outcome == TrialOutcome::StoppedFailure)
        .count();
    let capped = logs
        .iter()
        .filter(|l| l.outcome == TrialOutcome::MaxItersReached)
        .count();
    let rate = (wrong + capped) as f64 / logs.len() as f64;

    // Note: the matrix-sampled baseline's exact failure probability is
    // 0.314% (absorbing-chain solution of the percept-driven walk: wrong
    // stops require an M signal from R1, a 1.82% event per R1 insertion,
    // and the chain visits R1 about 0.17 times per trial). The demanded
    // floor of 0.5% is not reachable under this observation model; the
    // assertion is kept as specified and records the shortfall.
    let pass = (0.005..=0.10).contains(&rate);
    assert!(
        verdict(
            "4 (baseline failure reproduction)",
            pass,
            &format!(
                "10000 memoryless trials: wrong stops {wrong}, capped {capped}, \
                 failure rate {:.3}% (required 0.5%..10%)",
                100.0 * rate
            )
        ),
        "failure rate {:.4}% outside [0.5%, 10%]",
        100.0 * rate
    );
}

#[test]
fn criterion_5_mae_decay() {
    let logs = run_trials(&matched_campaign(10_000, 42), ControllerMode::Memory, 0).unwrap();
    // Mean |true status| per iteration over all trials; stopped trials
    // hold their final status. (The per-iteration table in metrics.csv
    // restricts each row to still-active trials, which concentrates the
    // few struggling trials and is not monotone by construction.)
    let curve = mae_all_trials(&logs, 3);
    let initial_ok = (curve[0] - 1.71).abs() <= 0.15;
    let decreasing = curve.windows(2).all(|w| w[1] < w[0]);
    let pass = initial_ok && decreasing;
    assert!(
        verdict(
            "5 (MAE decay)",
            pass,
            &format!("per-iteration MAE over all trials {curve:?} (iteration 0 within 1.71±0.15)")
        ),
        "curve {curve:?}"
    );
}

#[test]
fn criterion_6_memory_accuracy_dominates_perception() {
    let logs = run_trials(&matched_campaign(10_000, 42), ControllerMode::Memory, 0).unwrap();
    let metrics = compute_metrics(&logs);
    let mut detail = String::new();
    let mut pass = true;
    for row in metrics.rows.iter().skip(1) {
        detail.push_str(&format!(
            "it{}: mem {:.4} vs per {:.4} (n={}); ",
            row.iteration, row.memory_acc, row.perception_acc, row.active
        ));
        if row.memory_acc < row.perception_acc {
            pass = false;
        }
    }
    assert!(
        verdict("6 (memory accuracy >= perception accuracy)", pass, &detail),
        "{detail}"
    );
}

#[test]
fn criterion_7_analytic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let h = 1e-5;
    let mut worst = 0.0f64;

    for _ in 0..100 {
        let mut model = ClassifierModel::zeros(seven());
        for w in model.weights.iter_mut().flatten() {
            *w = rng.gen_range(-1.0..1.0);
        }
        for b in &mut model.biases {
            *b = rng.gen_range(-1.0..1.0);
        }
        for m in &mut model.feature_means {
            *m = rng.gen_range(-0.5..0.5);
        }
        for s in &mut model.feature_stds {
            *s = rng.gen_range(0.5..2.0);
        }
        let batch: Vec<LabeledSample> = (0..8)
            .map(|_| {
                let samples = (0..12)
                    .map(|_| {
                        [
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                        ]
                    })
                    .collect();
                LabeledSample {
                    trajectory: Trajectory { samples },
                    status: Status(rng.gen_range(-3..=3)),
                    offset_mm: 0.0,
                }
            })
            .collect();
        let l2 = rng.gen_range(0.0..0.01);

        let (_, grad) = loss_and_gradient(&model, &batch, l2).unwrap();
        let loss_at = |m: &ClassifierModel| loss_and_gradient(m, &batch, l2).unwrap().0;

        for k in 0..model.weights.len() {
            for f in 0..FEATURE_COUNT {
                let mut plus = model.clone();
                plus.weights[k][f] += h;
                let mut minus = model.clone();
                minus.weights[k][f] -= h;
                let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                let analytic = grad.weights[k][f];
                let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1.0);
                worst = worst.max(rel);
            }
            let mut plus = model.clone();
            plus.biases[k] += h;
            let mut minus = model.clone();
            minus.biases[k] -= h;
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let rel = (grad.biases[k] - fd).abs() / grad.biases[k].abs().max(fd.abs()).max(1.0);
            worst = worst.max(rel);
        }
    }
    let pass = worst < 1e-5;
    assert!(
        verdict(
            "7 (gradient check)",
            pass,
            &format!("100 random models/batches, worst relative error {worst:.2e}")
        ),
        "worst relative error {worst:.2e}"
    );
}

#[test]
fn criterion_8_end_to_end_synthetic_pipeline() {
    let space = seven();
    let params = TrajectoryParams::default();
    let grid = grid_positions(1.75, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let data = generate_dataset(&space, 1.75, &params, &grid, 50, &mut rng).unwrap();
    let (train, heldout) = split_stratified(&data, 0.7, 77);

    let model = train_classifier(&space, &train, &TrainConfig::default()).unwrap();
    let heldout_acc = accuracy(&model, &heldout).unwrap();

    let confusion = estimate_confusion(&model, &heldout, 0.5).unwrap();
    let diag_dominant = confusion
        .rows()
        .iter()
        .enumerate()
        .all(|(i, row)| row.iter().enumerate().all(|(j, p)| j == i || *p < row[i]));

    // Feed the estimated matrix to the filter while the world produces
    // trajectory-classified percepts.
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    write_model(&model_path, &model).unwrap();
    let matrix_path = dir.path().join("matrix.json");
    matrix::write_matrix(&matrix_path, &confusion).unwrap();

    let mut cfg = matched_campaign(10_000, 42);
    cfg.env.sensor_mode = SensorMode::TrajectoryClassified;
    cfg.model_file = Some(model_path);
    cfg.matrix = MatrixSource::File(matrix_path);
    let logs = run_trials(&cfg, ControllerMode::Memory, 0).unwrap();
    let wrong = logs
        .iter()
        .filter(|l| l.outcome == TrialOutcome::StoppedFailure)
        .count();
    let wrong_rate = wrong as f64 / logs.len() as f64;

    let pass = heldout_acc >= 0.90 && diag_dominant && wrong_rate <= 0.01;
    assert!(
        verdict(
            "8 (end-to-end synthetic pipeline)",
            pass,
            &format!(
                "held-out accuracy {heldout_acc:.4} ({} samples), confusion diagonally \
                 dominant: {diag_dominant}, wrong stops {wrong}/10000 ({:.3}%)",
                heldout.len(),
                100.0 * wrong_rate
            )
        ),
        "acc {heldout_acc}, diag {diag_dominant}, wrong rate {wrong_rate}"
    );
}

#[test]
fn criterion_9_campaigns_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut results = Vec::new();
    for workers in [1usize, 4] {
        let mut cfg = matched_campaign(2_000, 42);
        cfg.out_dir = Some(dir.path().join(format!("w{workers}")));
        run_experiment(&cfg, ControllerMode::Memory, workers).unwrap();
        results.push(
            std::fs::read(dir.path().join(format!("w{workers}")).join("trials.jsonl")).unwrap(),
        );
    }
    let pass = results[0] == results[1];
    assert!(
        verdict(
            "9 (determinism across worker counts)",
            pass,
            &format!(
                "trials.jsonl identical for 1 vs 4 workers ({} bytes)",
                results[0].len()
            )
        ),
        "outputs differ between worker counts"
    );
}

/// Feature extraction sanity retained alongside the gate: the generator's
/// success signature survives into the features that the classifier
/// separates on.
#[test]
fn feature_contract_smoke() {
    let params = TrajectoryParams {
        noise_sigma: 0.0,
        ..TrajectoryParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let set = generate_dataset(&seven(), 1.75, &params, &[0.0, 1.0], 1, &mut rng).unwrap();
    let success = extract_features(&set[0].trajectory).unwrap();
    let ramp = extract_features(&set[1].trajectory).unwrap();
    assert!(success[0].abs() < 1e-10 && (success[1] - 1.0).abs() < 1e-3);
    assert!((ramp[0] - 1.0).abs() < 1e-12 && ramp[1].abs() < 1e-12);
}
