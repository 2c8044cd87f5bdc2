//! Seeded Monte-Carlo insertion campaigns, the per-iteration metric
//! suite, and file outputs.
//!
//! Reproducibility contract: trial `t` of a campaign with master seed `S`
//! draws everything it needs (initial offset first, then all sensor
//! noise) from one ChaCha8 stream keyed by the 32-byte seed
//!
//! ```text
//! bytes  0..8   S, little-endian
//! bytes  8..16  t, little-endian
//! bytes 16..24  the ASCII tag "ffctrial"
//! bytes 24..32  zero
//! ```
//!
//! Streams are therefore independent across trials, identical across
//! runs, and independent of how many workers execute the campaign.

use crate::belief::Belief;
use crate::controller::{
    run_memory_controller, run_memoryless_controller, ControllerConfig, ControllerMode, TrialLog,
    TrialMeta, TrialOutcome,
};
use crate::error::{BeliefError, PerceptionError, SimError};
use crate::matrix::{self, PerceptionMatrix};
use crate::perception::{
    estimate_confusion, read_model, split_stratified, ClassifierModel, ClassifierSensor,
};
use crate::sim::{
    grid_positions, EnvConfig, MatrixSensor, Sensor, SensorMode, SimWorld, TrajectoryParams,
};
use crate::space::StatusSpace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("bad run config: {0}")]
    Config(String),
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let context = context.into();
    move |source| HarnessError::Io { context, source }
}

/// Where the filter's perception matrix comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixSource {
    /// The built-in default matrix for the seven-region setup.
    Builtin,
    /// A matrix JSON file.
    File(PathBuf),
    /// Estimate from a classifier model: synthesise a fresh labelled
    /// dataset, classify its held-out split, smooth with `alpha`.
    EstimateFromModel {
        model: PathBuf,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_estimate_reps")]
        reps: usize,
        #[serde(default = "default_estimate_seed")]
        seed: u64,
    },
}

fn default_alpha() -> f64 {
    0.5
}
fn default_estimate_reps() -> usize {
    20
}
fn default_estimate_seed() -> u64 {
    0x5eed
}

/// How initial offsets are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetSampling {
    /// Continuous uniform over the full reachable band.
    Uniform,
    /// Trial `t` lands in region `t mod (2n+1)` (canonical order),
    /// uniform within the region; mirrors a per-region collection
    /// protocol.
    Stratified,
}

/// Full description of one campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub trials: u64,
    pub master_seed: u64,
    pub controller: ControllerConfig,
    pub env: EnvConfig,
    pub matrix: MatrixSource,
    /// Classifier model, required when `env.sensor_mode` is
    /// `trajectory_classified`.
    pub model_file: Option<PathBuf>,
    pub traj: TrajectoryParams,
    pub offset_sampling: OffsetSampling,
    /// Initial belief in canonical ascending order; normalised on use.
    /// Absent means uniform.
    #[serde(default)]
    pub initial_belief: Option<Vec<f64>>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            trials: 100,
            master_seed: 42,
            controller: ControllerConfig::default(),
            env: EnvConfig::new(
                StatusSpace::default_seven(),
                None,
                SensorMode::MatrixSampled,
            )
            .expect("default env is valid"),
            matrix: MatrixSource::Builtin,
            model_file: None,
            traj: TrajectoryParams::default(),
            offset_sampling: OffsetSampling::Uniform,
            initial_belief: None,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials < 1 {
            return Err(HarnessError::Config("trials must be >= 1".into()));
        }
        self.controller.validate()?;
        self.traj.validate()?;
        if self.env.offset_halfspan_mm < self.env.space.delta_mm() / 2.0 {
            return Err(HarnessError::Config(
                "offset_halfspan_mm must be at least delta/2".into(),
            ));
        }
        if self.env.sensor_mode == SensorMode::TrajectoryClassified && self.model_file.is_none() {
            return Err(HarnessError::Config(
                "sensor_mode trajectory_classified needs model_file".into(),
            ));
        }
        self.resolve_prior()?;
        Ok(())
    }

    /// Build the configured initial belief (normalised), or None for the
    /// uniform default.
    pub fn resolve_prior(&self) -> Result<Option<Belief>, HarnessError> {
        let Some(probs) = &self.initial_belief else {
            return Ok(None);
        };
        let belief = Belief::from_probs(self.env.space, probs.clone())?;
        let total = belief.total_mass();
        if total <= 0.0 {
            return Err(HarnessError::Config(
                "initial_belief must carry positive mass".into(),
            ));
        }
        let normalised = Belief::from_probs(
            self.env.space,
            belief.probs().iter().map(|p| p / total).collect(),
        )?;
        Ok(Some(normalised))
    }
}

/// The per-trial RNG stream; see the module docs for the layout.
pub fn derive_rng_stream(master_seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&trial_index.to_le_bytes());
    key[16..24].copy_from_slice(b"ffctrial");
    ChaCha8Rng::from_seed(key)
}

/// Draw the initial offset for a trial; always the first value consumed
/// from the trial stream.
fn sample_offset(
    sampling: OffsetSampling,
    env: &EnvConfig,
    trial_index: u64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    match sampling {
        OffsetSampling::Uniform => rng.gen_range(-env.offset_halfspan_mm..=env.offset_halfspan_mm),
        OffsetSampling::Stratified => {
            let space = &env.space;
            let delta = space.delta_mm();
            // Cycle only through regions reachable within the band.
            let k_max = crate::sim::status_of_offset(env.offset_halfspan_mm, space)
                .value()
                .abs();
            let regions = (2 * k_max + 1) as u64;
            let s = (trial_index % regions) as i32 - k_max;
            let (lo, hi) = if s == 0 {
                let half = (delta / 2.0).min(env.offset_halfspan_mm);
                (-half, half)
            } else {
                let inner = delta / 2.0 + (s.abs() - 1) as f64 * delta;
                let outer = (inner + delta).min(env.offset_halfspan_mm);
                if s > 0 {
                    (inner, outer)
                } else {
                    (-outer, -inner)
                }
            };
            rng.gen_range(lo..=hi)
        }
    }
}

/// Resolve the filter matrix from its configured source.
pub fn resolve_matrix(cfg: &RunConfig) -> Result<PerceptionMatrix, HarnessError> {
    match &cfg.matrix {
        MatrixSource::Builtin => Ok(matrix::default_perception_matrix()),
        MatrixSource::File(path) => Ok(matrix::read_matrix(path, cfg.env.space.delta_mm())?),
        MatrixSource::EstimateFromModel {
            model,
            alpha,
            reps,
            seed,
        } => {
            let model = read_model(model)?;
            Ok(estimate_matrix_from_model(
                cfg, &model, *alpha, *reps, *seed,
            )?)
        }
    }
}

/// Synthesise a grid dataset, classify its held-out split with the model,
/// and smooth the confusion counts.
pub fn estimate_matrix_from_model(
    cfg: &RunConfig,
    model: &ClassifierModel,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<PerceptionMatrix, HarnessError> {
    let positions = grid_positions(cfg.env.offset_halfspan_mm, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = crate::perception::generate_dataset(
        &cfg.env.space,
        cfg.env.offset_halfspan_mm,
        &cfg.traj,
        &positions,
        reps,
        &mut rng,
    )?;
    let (_, heldout) = split_stratified(&set, 0.7, seed);
    Ok(estimate_confusion(model, &heldout, alpha)?)
}

fn run_one_trial<S: Sensor>(
    cfg: &RunConfig,
    matrix: &PerceptionMatrix,
    sensor: &S,
    prior: Option<&Belief>,
    mode: ControllerMode,
    trial_index: u64,
) -> Result<TrialLog, HarnessError> {
    let mut rng = derive_rng_stream(cfg.master_seed, trial_index);
    let offset = sample_offset(cfg.offset_sampling, &cfg.env, trial_index, &mut rng);
    let mut world = SimWorld::new(&cfg.env, sensor, offset)?;
    let meta = TrialMeta {
        trial_id: trial_index,
        master_seed: cfg.master_seed,
    };
    let log = match mode {
        ControllerMode::Memory => {
            run_memory_controller(&mut world, matrix, &cfg.controller, meta, prior, &mut rng)?
        }
        ControllerMode::Memoryless => {
            run_memoryless_controller(&mut world, &cfg.controller, meta, &mut rng)
        }
    };
    Ok(log)
}

/// Run every trial of a campaign arm on `workers` threads (0 = rayon's
/// default). Logs come back ordered by trial index and are bit-identical
/// for any worker count.
pub fn run_trials(
    cfg: &RunConfig,
    mode: ControllerMode,
    workers: usize,
) -> Result<Vec<TrialLog>, HarnessError> {
    cfg.validate()?;
    let filter_matrix = resolve_matrix(cfg)?;

    enum AnySensor {
        Matrix(MatrixSensor),
        Classifier(ClassifierSensor),
    }
    impl Sensor for AnySensor {
        fn sense(
            &self,
            state: &crate::sim::EnvState,
            space: &StatusSpace,
            rng: &mut ChaCha8Rng,
        ) -> crate::space::PerceptSignal {
            match self {
                AnySensor::Matrix(s) => s.sense(state, space, rng),
                AnySensor::Classifier(s) => s.sense(state, space, rng),
            }
        }
    }

    let sensor = match cfg.env.sensor_mode {
        SensorMode::MatrixSampled => AnySensor::Matrix(MatrixSensor {
            matrix: filter_matrix.clone(),
        }),
        SensorMode::TrajectoryClassified => {
            let path = cfg.model_file.as_ref().expect("validated above");
            AnySensor::Classifier(ClassifierSensor {
                params: cfg.traj,
                model: read_model(path)?,
            })
        }
    };

    let prior = cfg.resolve_prior()?;
    let indices: Vec<u64> = (0..cfg.trials).collect();
    let run = |i: &u64| run_one_trial(cfg, &filter_matrix, &sensor, prior.as_ref(), mode, *i);
    if workers == 1 {
        indices.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| HarnessError::Config(format!("cannot build thread pool: {e}")))?;
        pool.install(|| indices.par_iter().map(run).collect())
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// One row of the per-iteration metric table. Statistics are computed
/// over the trials still active at the iteration (those that recorded
/// it); earlier stoppers drop out of later rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub active: usize,
    /// Records where the memory estimate overrode the percept.
    pub revisions: usize,
    /// Mean `|estimate - percept|` over the revised records (0 if none).
    pub mean_abs_revision: f64,
    /// Fraction of active records whose percept matches the true status.
    pub perception_acc: f64,
    /// Fraction whose memory estimate matches the true status.
    pub memory_acc: f64,
    /// Mean reliability of correct estimates (absent if none).
    pub rel_correct: Option<f64>,
    /// Mean reliability of incorrect estimates (absent if none).
    pub rel_incorrect: Option<f64>,
    /// Mean reliability of all active records.
    pub rel_all: f64,
    /// Trials whose stop rule fired at this iteration.
    pub stopped: usize,
    /// Fraction of those stops that were true successes (absent if none
    /// stopped here).
    pub stop_success_rate: Option<f64>,
    /// Mean `|true status|` after this iteration's action over active
    /// trials.
    pub mae: f64,
    /// Fraction of all trials stopped successfully by this iteration.
    pub cum_success: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

/// Aggregate the per-iteration metric suite from trial logs.
pub fn compute_metrics(logs: &[TrialLog]) -> MetricsTable {
    let total = logs.len();
    let max_len = logs.iter().map(|l| l.records.len()).max().unwrap_or(0);
    let mut rows = Vec::new();
    let mut cum_success_count = 0usize;

    for i in 0..max_len {
        let active: Vec<(&TrialLog, &crate::controller::IterationRecord)> = logs
            .iter()
            .filter_map(|l| l.records.get(i).map(|r| (l, r)))
            .collect();
        if active.is_empty() {
            break;
        }
        let n = active.len() as f64;

        let mut revisions = 0usize;
        let mut revision_mag = 0.0;
        let mut percept_hits = 0usize;
        let mut memory_hits = 0usize;
        let mut rel_correct_sum = 0.0;
        let mut rel_correct_n = 0usize;
        let mut rel_incorrect_sum = 0.0;
        let mut rel_incorrect_n = 0usize;
        let mut rel_sum = 0.0;
        let mut stopped = 0usize;
        let mut stop_successes = 0usize;
        let mut abs_status_sum = 0.0;

        for (log, r) in &active {
            let truth = r.true_after;
            if r.revised {
                revisions += 1;
                revision_mag += (r.estimate.value() - r.percept.value()).abs() as f64;
            }
            if r.percept.value() == truth.value() {
                percept_hits += 1;
            }
            if r.estimate.value() == truth.value() {
                memory_hits += 1;
                rel_correct_sum += r.reliability;
                rel_correct_n += 1;
            } else {
                rel_incorrect_sum += r.reliability;
                rel_incorrect_n += 1;
            }
            rel_sum += r.reliability;
            abs_status_sum += truth.value().abs() as f64;
            if log.stop_iteration == Some(i) {
                stopped += 1;
                if log.outcome == TrialOutcome::StoppedSuccess {
                    stop_successes += 1;
                    cum_success_count += 1;
                }
            }
        }

        rows.push(MetricsRow {
            iteration: i,
            active: active.len(),
            revisions,
            mean_abs_revision: if revisions > 0 {
                revision_mag / revisions as f64
            } else {
                0.0
            },
            perception_acc: percept_hits as f64 / n,
            memory_acc: memory_hits as f64 / n,
            rel_correct: (rel_correct_n > 0).then(|| rel_correct_sum / rel_correct_n as f64),
            rel_incorrect: (rel_incorrect_n > 0)
                .then(|| rel_incorrect_sum / rel_incorrect_n as f64),
            rel_all: rel_sum / n,
            stopped,
            stop_success_rate: (stopped > 0).then(|| stop_successes as f64 / stopped as f64),
            mae: abs_status_sum / n,
            cum_success: cum_success_count as f64 / total as f64,
        });
    }
    MetricsTable { rows }
}

/// Mean `|true status|` per iteration over *all* trials, stopped trials
/// contributing the status they ended at. Unlike the shrinking-population
/// rows of [`compute_metrics`], this curve is what decays monotonically
/// as the controller converges.
pub fn mae_all_trials(logs: &[TrialLog], through_iteration: usize) -> Vec<f64> {
    let total = logs.len() as f64;
    (0..=through_iteration)
        .map(|i| {
            logs.iter()
                .map(|l| {
                    let idx = i.min(l.records.len().saturating_sub(1));
                    l.records[idx].true_after.value().abs() as f64
                })
                .sum::<f64>()
                / total
        })
        .collect()
}

/// Campaign-level totals for one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub mode: ControllerMode,
    pub trials: u64,
    pub master_seed: u64,
    pub stopped_success: u64,
    pub stopped_failure: u64,
    pub max_iters_reached: u64,
    /// stopped_success / trials.
    pub success_rate: f64,
    /// stopped_failure / trials.
    pub wrong_stop_rate: f64,
    /// (stopped_failure + max_iters_reached) / trials.
    pub failure_rate: f64,
    pub mean_iterations_to_stop: Option<f64>,
    pub config: Option<RunConfig>,
}

pub fn summarize(
    logs: &[TrialLog],
    mode: ControllerMode,
    config: Option<&RunConfig>,
) -> SummaryReport {
    let trials = logs.len() as u64;
    let count = |o: TrialOutcome| logs.iter().filter(|l| l.outcome == o).count() as u64;
    let stopped_success = count(TrialOutcome::StoppedSuccess);
    let stopped_failure = count(TrialOutcome::StoppedFailure);
    let max_iters_reached = count(TrialOutcome::MaxItersReached);
    let stops: Vec<f64> = logs
        .iter()
        .filter_map(|l| l.stop_iteration.map(|i| i as f64))
        .collect();
    SummaryReport {
        mode,
        trials,
        master_seed: logs.first().map(|l| l.master_seed).unwrap_or(0),
        stopped_success,
        stopped_failure,
        max_iters_reached,
        success_rate: stopped_success as f64 / trials as f64,
        wrong_stop_rate: stopped_failure as f64 / trials as f64,
        failure_rate: (stopped_failure + max_iters_reached) as f64 / trials as f64,
        mean_iterations_to_stop: (!stops.is_empty())
            .then(|| stops.iter().sum::<f64>() / stops.len() as f64),
        config: config.cloned(),
    }
}

// ---------------------------------------------------------------------------
// File outputs
// ---------------------------------------------------------------------------

pub const METRICS_HEADER: &str = "iteration,revisions,mean_abs_revision,perception_acc,\
memory_acc,rel_correct,rel_incorrect,rel_all,stopped,stop_success_rate,mae,cum_success";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write `summary.json`, `metrics.csv`, `trials.jsonl`, and
/// `run_config.json` into a directory.
pub fn write_outputs(
    dir: &Path,
    report: &SummaryReport,
    metrics: &MetricsTable,
    logs: &[TrialLog],
    config: &RunConfig,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;

    let summary_path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(report).expect("summary serializes");
    std::fs::write(&summary_path, text + "\n")
        .map_err(io_err(format!("writing {}", summary_path.display())))?;

    let metrics_path = dir.join("metrics.csv");
    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    for r in &metrics.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.iteration,
            r.revisions,
            r.mean_abs_revision,
            r.perception_acc,
            r.memory_acc,
            fmt_opt(r.rel_correct),
            fmt_opt(r.rel_incorrect),
            r.rel_all,
            r.stopped,
            fmt_opt(r.stop_success_rate),
            r.mae,
            r.cum_success,
        ));
    }
    std::fs::write(&metrics_path, csv)
        .map_err(io_err(format!("writing {}", metrics_path.display())))?;

    let trials_path = dir.join("trials.jsonl");
    let file = std::fs::File::create(&trials_path)
        .map_err(io_err(format!("creating {}", trials_path.display())))?;
    let mut w = BufWriter::new(file);
    for log in logs {
        serde_json::to_writer(&mut w, log).expect("trial log serializes");
        w.write_all(b"\n")
            .map_err(io_err(format!("writing {}", trials_path.display())))?;
    }
    w.flush()
        .map_err(io_err(format!("writing {}", trials_path.display())))?;

    let config_path = dir.join("run_config.json");
    let text = serde_json::to_string_pretty(config).expect("config serializes");
    std::fs::write(&config_path, text + "\n")
        .map_err(io_err(format!("writing {}", config_path.display())))?;

    Ok(())
}

/// Parse a `trials.jsonl` file back into logs.
pub fn read_trials(path: &Path) -> Result<Vec<TrialLog>, HarnessError> {
    let file = std::fs::File::open(path).map_err(io_err(format!("opening {}", path.display())))?;
    std::io::BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map(|l| !l.trim().is_empty()).unwrap_or(true))
        .map(|line| {
            let line = line.map_err(io_err(format!("reading {}", path.display())))?;
            serde_json::from_str(&line)
                .map_err(|e| HarnessError::Config(format!("bad trial log line: {e}")))
        })
        .collect()
}

/// Outputs of one campaign arm.
pub struct ArmResult {
    pub mode: ControllerMode,
    pub report: SummaryReport,
    pub metrics: MetricsTable,
    pub logs: Vec<TrialLog>,
}

/// Run one arm end to end and, when `cfg.out_dir` is set, persist its
/// artifacts there.
pub fn run_experiment(
    cfg: &RunConfig,
    mode: ControllerMode,
    workers: usize,
) -> Result<ArmResult, HarnessError> {
    let mut arm_cfg = cfg.clone();
    arm_cfg.controller.mode = mode;
    let logs = run_trials(&arm_cfg, mode, workers)?;
    let metrics = compute_metrics(&logs);
    let report = summarize(&logs, mode, Some(&arm_cfg));
    if let Some(dir) = &arm_cfg.out_dir {
        write_outputs(dir, &report, &metrics, &logs, &arm_cfg)?;
    }
    Ok(ArmResult {
        mode,
        report,
        metrics,
        logs,
    })
}
