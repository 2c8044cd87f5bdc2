//! Trajectory perception: fixed features plus a multinomial softmax
//! classifier, and confusion-matrix estimation on held-out data.
//!
//! The feature set exposes exactly the discriminative trends of the
//! synthetic trajectories: the success bump versus ramp on X, the sign
//! and slope of Y, and the magnitude of Z. Any model fulfilling
//! `Trajectory -> PerceptSignal` can replace the linear classifier
//! without touching the rest of the pipeline.

use crate::error::{PerceptionError, SimError};
use crate::matrix::PerceptionMatrix;
use crate::sim::{self, EnvState, Sensor, Trajectory, TrajectoryParams};
use crate::space::{PerceptSignal, Status, StatusSpace};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FEATURE_COUNT: usize = 7;

/// Feature order is part of the model contract.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "final_x",
    "x_peak_drop",
    "mean_y",
    "final_y",
    "slope_y",
    "final_z",
    "mean_z",
];

pub type FeatureVector = [f64; FEATURE_COUNT];

/// One labelled insertion trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub trajectory: Trajectory,
    pub status: Status,
    pub offset_mm: f64,
}

pub type LabeledSet = Vec<LabeledSample>;

/// Deterministic 7-vector of trajectory features:
/// `[final x, max x - final x, mean y, final y, least-squares slope of y
/// over t, final z, mean z]`.
pub fn extract_features(traj: &Trajectory) -> Result<FeatureVector, PerceptionError> {
    let t_count = traj.len();
    if t_count < 2 {
        return Err(PerceptionError::DegenerateTrajectory { len: t_count });
    }
    let xs = traj.samples.iter().map(|s| s[0]);
    let ys: Vec<f64> = traj.samples.iter().map(|s| s[1]).collect();
    let zs = traj.samples.iter().map(|s| s[2]);

    let final_x = traj.samples[t_count - 1][0];
    let max_x = xs.fold(f64::MIN, f64::max);
    let mean_y = ys.iter().sum::<f64>() / t_count as f64;
    let final_y = ys[t_count - 1];

    // Least-squares slope of y against the sample index t = 1..T.
    let t_mean = (t_count as f64 + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (i, y) in ys.iter().enumerate() {
        let dt = (i + 1) as f64 - t_mean;
        cov += dt * (y - mean_y);
        var += dt * dt;
    }
    let slope_y = cov / var;

    let final_z = traj.samples[t_count - 1][2];
    let mean_z = zs.sum::<f64>() / t_count as f64;

    Ok([
        final_x,
        max_x - final_x,
        mean_y,
        final_y,
        slope_y,
        final_z,
        mean_z,
    ])
}

/// Synthesise a labelled dataset: `reps` trajectories at every offset in
/// `positions`, labelled by the region the offset falls in. Deterministic
/// for a given RNG stream.
pub fn generate_dataset(
    space: &StatusSpace,
    halfspan_mm: f64,
    params: &TrajectoryParams,
    positions: &[f64],
    reps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledSet, SimError> {
    params.validate()?;
    if let Some(&bad) = positions.iter().find(|p| p.abs() > halfspan_mm) {
        return Err(SimError::OffsetOutOfRange {
            offset_mm: bad,
            halfspan_mm,
        });
    }
    let mut set = Vec::with_capacity(positions.len() * reps);
    for &offset_mm in positions {
        let state = EnvState {
            offset_mm,
            insert_count: 0,
        };
        let status = sim::status_of(&state, space);
        for _ in 0..reps {
            set.push(LabeledSample {
                trajectory: sim::synth_trajectory(&state, space, params, rng),
                status,
                offset_mm,
            });
        }
    }
    Ok(set)
}

/// Stratified train/test split: samples are grouped by status, each group
/// is shuffled with the seeded stream and split at `train_frac`.
pub fn split_stratified(data: &LabeledSet, train_frac: f64, seed: u64) -> (LabeledSet, LabeledSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_status: std::collections::BTreeMap<i32, Vec<usize>> = Default::default();
    for (i, sample) in data.iter().enumerate() {
        by_status.entry(sample.status.value()).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, mut indices) in by_status {
        indices.shuffle(&mut rng);
        let len = indices.len();
        let mut n_train = ((len as f64) * train_frac).round() as usize;
        n_train = n_train.clamp(1, len);
        if len >= 2 {
            n_train = n_train.min(len - 1);
        }
        for (k, idx) in indices.into_iter().enumerate() {
            if k < n_train {
                train.push(data[idx].clone());
            } else {
                test.push(data[idx].clone());
            }
        }
    }
    (train, test)
}

/// A trained multinomial softmax classifier over standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub space: StatusSpace,
    /// `(2n+1) x FEATURE_COUNT`, class-major.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
}

impl ClassifierModel {
    /// Zero-initialised model with identity standardization.
    pub fn zeros(space: StatusSpace) -> Self {
        let k = space.cardinality();
        ClassifierModel {
            space,
            weights: vec![vec![0.0; FEATURE_COUNT]; k],
            biases: vec![0.0; k],
            feature_means: vec![0.0; FEATURE_COUNT],
            feature_stds: vec![1.0; FEATURE_COUNT],
        }
    }

    fn standardize(&self, features: &FeatureVector) -> Vec<f64> {
        features
            .iter()
            .zip(self.feature_means.iter().zip(&self.feature_stds))
            .map(|(x, (mean, std))| (x - mean) / std)
            .collect()
    }

    fn logits(&self, standardized: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| {
                w.iter()
                    .zip(standardized)
                    .map(|(wi, xi)| wi * xi)
                    .sum::<f64>()
                    + b
            })
            .collect()
    }
}

/// Gradients with the same shape as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 500,
            l2_penalty: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        if !(self.learning_rate > 0.0) {
            return Err(PerceptionError::InvalidConfig(format!(
                "learning_rate = {}, need > 0",
                self.learning_rate
            )));
        }
        if self.epochs < 1 {
            return Err(PerceptionError::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.l2_penalty >= 0.0) {
            return Err(PerceptionError::InvalidConfig(
                "l2_penalty must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Softmax cross-entropy loss plus `l2 * ||W||^2`, and its exact analytic
/// gradients, on pre-standardized feature rows.
fn loss_grad_standardized(
    weights: &[Vec<f64>],
    biases: &[f64],
    rows: &[Vec<f64>],
    labels: &[usize],
    l2_penalty: f64,
) -> (f64, Gradients) {
    let classes = weights.len();
    let batch = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![vec![0.0; FEATURE_COUNT]; classes];
    let mut grad_b = vec![0.0; classes];

    for (row, &label) in rows.iter().zip(labels) {
        let logits: Vec<f64> = weights
            .iter()
            .zip(biases)
            .map(|(w, b)| w.iter().zip(row).map(|(wi, xi)| wi * xi).sum::<f64>() + b)
            .collect();
        let max = logits.iter().cloned().fold(f64::MIN, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let denom: f64 = exps.iter().sum();
        loss += -(logits[label] - max - denom.ln());
        for k in 0..classes {
            let diff = exps[k] / denom - if k == label { 1.0 } else { 0.0 };
            for (g, xi) in grad_w[k].iter_mut().zip(row) {
                *g += diff * xi;
            }
            grad_b[k] += diff;
        }
    }
    loss /= batch;
    for g in grad_w.iter_mut().flatten() {
        *g /= batch;
    }
    for g in &mut grad_b {
        *g /= batch;
    }

    for (gw, w) in grad_w.iter_mut().flatten().zip(weights.iter().flatten()) {
        *gw += 2.0 * l2_penalty * w;
    }
    let l2: f64 = weights.iter().flatten().map(|w| w * w).sum();
    loss += l2_penalty * l2;

    (
        loss,
        Gradients {
            weights: grad_w,
            biases: grad_b,
        },
    )
}

/// Mean cross-entropy plus L2 penalty and its analytic gradients for a
/// labelled batch under the model's standardization.
pub fn loss_and_gradient(
    model: &ClassifierModel,
    batch: &LabeledSet,
    l2_penalty: f64,
) -> Result<(f64, Gradients), PerceptionError> {
    if batch.is_empty() {
        return Err(PerceptionError::DegenerateData("empty batch".into()));
    }
    let rows: Vec<Vec<f64>> = batch
        .iter()
        .map(|s| Ok(model.standardize(&extract_features(&s.trajectory)?)))
        .collect::<Result<_, PerceptionError>>()?;
    let labels: Vec<usize> = batch
        .iter()
        .map(|s| model.space.index_of(s.status))
        .collect();
    Ok(loss_grad_standardized(
        &model.weights,
        &model.biases,
        &rows,
        &labels,
        l2_penalty,
    ))
}

/// Train by full-batch gradient descent from zero weights, returning the
/// model and the recorded loss after every epoch. A step that would
/// increase the loss is rejected and the learning rate halved, so the
/// recorded sequence is non-increasing.
pub fn train_classifier_traced(
    space: &StatusSpace,
    data: &LabeledSet,
    cfg: &TrainConfig,
) -> Result<(ClassifierModel, Vec<f64>), PerceptionError> {
    cfg.validate()?;
    let distinct: std::collections::BTreeSet<i32> = data.iter().map(|s| s.status.value()).collect();
    if distinct.len() < 2 {
        return Err(PerceptionError::DegenerateData(format!(
            "need at least 2 classes, got {}",
            distinct.len()
        )));
    }

    let features: Vec<FeatureVector> = data
        .iter()
        .map(|s| extract_features(&s.trajectory))
        .collect::<Result<_, _>>()?;
    let labels: Vec<usize> = data.iter().map(|s| space.index_of(s.status)).collect();

    // Standardization statistics. A zero-variance feature keeps std 1;
    // its standardized values are exactly zero, so the corresponding
    // weights never move from zero.
    let count = features.len() as f64;
    let mut means = vec![0.0; FEATURE_COUNT];
    for f in &features {
        for (m, x) in means.iter_mut().zip(f) {
            *m += x;
        }
    }
    for m in &mut means {
        *m /= count;
    }
    let mut stds = vec![0.0; FEATURE_COUNT];
    for f in &features {
        for ((sd, x), m) in stds.iter_mut().zip(f).zip(&means) {
            *sd += (x - m) * (x - m);
        }
    }
    for sd in &mut stds {
        *sd = (*sd / count).sqrt();
        if *sd == 0.0 {
            *sd = 1.0;
        }
    }

    let mut model = ClassifierModel {
        space: *space,
        weights: vec![vec![0.0; FEATURE_COUNT]; space.cardinality()],
        biases: vec![0.0; space.cardinality()],
        feature_means: means,
        feature_stds: stds,
    };
    let rows: Vec<Vec<f64>> = features.iter().map(|f| model.standardize(f)).collect();

    let mut lr = cfg.learning_rate;
    let (mut loss, mut grad) = loss_grad_standardized(
        &model.weights,
        &model.biases,
        &rows,
        &labels,
        cfg.l2_penalty,
    );
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let cand_w: Vec<Vec<f64>> = model
            .weights
            .iter()
            .zip(&grad.weights)
            .map(|(wr, gr)| wr.iter().zip(gr).map(|(w, g)| w - lr * g).collect())
            .collect();
        let cand_b: Vec<f64> = model
            .biases
            .iter()
            .zip(&grad.biases)
            .map(|(b, g)| b - lr * g)
            .collect();
        let (cand_loss, cand_grad) =
            loss_grad_standardized(&cand_w, &cand_b, &rows, &labels, cfg.l2_penalty);
        if cand_loss > loss {
            lr /= 2.0;
        } else {
            model.weights = cand_w;
            model.biases = cand_b;
            loss = cand_loss;
            grad = cand_grad;
        }
        history.push(loss);
    }
    Ok((model, history))
}

pub fn train_classifier(
    space: &StatusSpace,
    data: &LabeledSet,
    cfg: &TrainConfig,
) -> Result<ClassifierModel, PerceptionError> {
    train_classifier_traced(space, data, cfg).map(|(model, _)| model)
}

/// Classify a trajectory: argmax of the softmax over standardized
/// features (deterministic; the lowest status wins exact logit ties).
pub fn classify(
    model: &ClassifierModel,
    traj: &Trajectory,
) -> Result<PerceptSignal, PerceptionError> {
    let features = extract_features(traj)?;
    let logits = model.logits(&model.standardize(&features));
    let mut best = 0;
    for (k, l) in logits.iter().enumerate() {
        if *l > logits[best] {
            best = k;
        }
    }
    Ok(PerceptSignal(model.space.status_at(best).value()))
}

/// Fraction of samples the model labels correctly.
pub fn accuracy(model: &ClassifierModel, set: &LabeledSet) -> Result<f64, PerceptionError> {
    if set.is_empty() {
        return Err(PerceptionError::DegenerateData("empty set".into()));
    }
    let mut hits = 0usize;
    for sample in set {
        if classify(model, &sample.trajectory)?.value() == sample.status.value() {
            hits += 1;
        }
    }
    Ok(hits as f64 / set.len() as f64)
}

/// Estimate the perception matrix as smoothed per-status frequencies of
/// the classifier's outputs on held-out data:
/// `p(z|s) = (count(s -> z) + alpha) / (count(s) + alpha * (2n+1))`.
pub fn estimate_confusion(
    model: &ClassifierModel,
    heldout: &LabeledSet,
    alpha: f64,
) -> Result<PerceptionMatrix, PerceptionError> {
    let space = model.space;
    let k = space.cardinality();
    let mut counts = vec![vec![0.0f64; k]; k];
    for sample in heldout {
        let z = classify(model, &sample.trajectory)?;
        counts[space.index_of(sample.status)][(z.value() + space.n()) as usize] += 1.0;
    }
    let mut rows = vec![vec![0.0; k]; k];
    for (i, row) in counts.iter().enumerate() {
        let total: f64 = row.iter().sum();
        if total == 0.0 {
            return Err(PerceptionError::MissingClass {
                label: space.status_at(i).label(),
            });
        }
        for (j, c) in row.iter().enumerate() {
            rows[i][j] = (c + alpha) / (total + alpha * k as f64);
        }
    }
    PerceptionMatrix::new(space, rows).map_err(|e| {
        PerceptionError::DegenerateData(format!("estimated matrix failed validation: {e}"))
    })
}

/// Sensor that synthesises a trajectory at the true offset and classifies
/// it; the end-to-end perception path.
pub struct ClassifierSensor {
    pub params: TrajectoryParams,
    pub model: ClassifierModel,
}

impl Sensor for ClassifierSensor {
    fn sense(&self, state: &EnvState, space: &StatusSpace, rng: &mut ChaCha8Rng) -> PerceptSignal {
        let traj = sim::synth_trajectory(state, space, &self.params, rng);
        classify(&self.model, &traj).expect("generator produces >= 2 samples")
    }
}

// ---------------------------------------------------------------------------
// Model and dataset-manifest files
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    labels: Vec<String>,
    delta_mm: f64,
    feature_names: Vec<String>,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
    feature_means: Vec<f64>,
    feature_stds: Vec<f64>,
}

pub fn write_model(path: &Path, model: &ClassifierModel) -> std::io::Result<()> {
    let file = ModelFile {
        labels: model.space.labels(),
        delta_mm: model.space.delta_mm(),
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        weights: model.weights.clone(),
        biases: model.biases.clone(),
        feature_means: model.feature_means.clone(),
        feature_stds: model.feature_stds.clone(),
    };
    let text = serde_json::to_string_pretty(&file).expect("model serializes");
    std::fs::write(path, text + "\n")
}

pub fn read_model(path: &Path) -> Result<ClassifierModel, PerceptionError> {
    let bad = |msg: String| PerceptionError::MalformedModel(msg);
    let text = std::fs::read_to_string(path)
        .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| bad(format!("cannot parse: {e}")))?;

    if file.labels.len().is_multiple_of(2) || file.labels.len() < 3 {
        return Err(bad(format!(
            "label count {} is not 2n+1",
            file.labels.len()
        )));
    }
    let n = (file.labels.len() / 2) as i32;
    let space =
        StatusSpace::new(n, file.delta_mm).map_err(|e| bad(format!("bad status space: {e}")))?;
    if file.labels != space.labels() {
        return Err(bad(format!(
            "labels {:?} are not canonical {:?}",
            file.labels,
            space.labels()
        )));
    }
    if file.feature_names != FEATURE_NAMES {
        return Err(bad(format!(
            "feature names {:?} do not match the contract {:?}",
            file.feature_names, FEATURE_NAMES
        )));
    }
    let k = space.cardinality();
    if file.weights.len() != k
        || file.weights.iter().any(|w| w.len() != FEATURE_COUNT)
        || file.biases.len() != k
        || file.feature_means.len() != FEATURE_COUNT
        || file.feature_stds.len() != FEATURE_COUNT
    {
        return Err(bad("parameter shapes are inconsistent".into()));
    }
    if file.feature_stds.iter().any(|s| !(*s > 0.0)) {
        return Err(bad("feature_stds must be strictly positive".into()));
    }
    Ok(ClassifierModel {
        space,
        weights: file.weights,
        biases: file.biases,
        feature_means: file.feature_means,
        feature_stds: file.feature_stds,
    })
}

/// One dataset-manifest entry: a trajectory CSV, its region label, and
/// the offset it was recorded at.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: String,
    pub offset_mm: f64,
}

/// Write trajectories as CSV files plus a JSON manifest listing
/// `{path, label, offset_mm}` per sample.
pub fn write_dataset(dir: &Path, set: &LabeledSet) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(set.len());
    for (i, sample) in set.iter().enumerate() {
        let name = format!("traj_{i:05}.csv");
        sim::write_trajectory_csv(&dir.join(&name), &sample.trajectory)?;
        entries.push(ManifestEntry {
            path: name,
            label: sample.status.label(),
            offset_mm: sample.offset_mm,
        });
    }
    let text = serde_json::to_string_pretty(&entries).expect("manifest serializes");
    std::fs::write(dir.join("manifest.json"), text + "\n")
}

/// Load a dataset manifest; trajectory paths resolve relative to the
/// manifest's directory.
pub fn read_dataset(manifest: &Path, space: &StatusSpace) -> Result<LabeledSet, PerceptionError> {
    let bad = |msg: String| PerceptionError::DegenerateData(msg);
    let text = std::fs::read_to_string(manifest)
        .map_err(|e| bad(format!("cannot read {}: {e}", manifest.display())))?;
    let entries: Vec<ManifestEntry> =
        serde_json::from_str(&text).map_err(|e| bad(format!("cannot parse manifest: {e}")))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    entries
        .into_iter()
        .map(|entry| {
            let status = space
                .parse_label(&entry.label)
                .map_err(|e| bad(format!("bad label in manifest: {e}")))?;
            let trajectory = sim::read_trajectory_csv(&base.join(&entry.path))
                .map_err(|e| bad(format!("cannot read {}: {e}", entry.path)))?;
            Ok(LabeledSample {
                trajectory,
                status,
                offset_mm: entry.offset_mm,
            })
        })
        .collect()
}
