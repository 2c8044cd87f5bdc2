//! `ffc` — run seeded insertion campaigns, synthesise tactile datasets,
//! train the trajectory classifier, estimate perception matrices, and
//! recompute reports from trial logs.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ffc_core::controller::ControllerMode;
use ffc_core::experiment::{
    compute_metrics, read_trials, run_experiment, summarize, write_outputs, MatrixSource,
    OffsetSampling, RunConfig, SummaryReport,
};
use ffc_core::matrix;
use ffc_core::perception::{
    accuracy, estimate_confusion, generate_dataset, read_dataset, read_model, split_stratified,
    train_classifier, write_dataset, write_model, TrainConfig,
};
use ffc_core::sim::{grid_positions, SensorMode, TrajectoryParams};
use ffc_core::space::StatusSpace;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "ffc",
    version,
    about = "Reliability-controlled insertion experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo insertion campaign and write its artifacts.
    Run(RunArgs),
    /// Generate a labelled synthetic trajectory dataset.
    Synth(SynthArgs),
    /// Train the trajectory classifier and write a model file.
    Train(TrainArgs),
    /// Estimate a perception matrix from a model and a held-out dataset.
    EvalMatrix(EvalMatrixArgs),
    /// Recompute metrics and summary from an existing trials.jsonl.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Memory,
    Memoryless,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum SensorArg {
    Matrix,
    Trajectory,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplingArg {
    Uniform,
    Stratified,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    /// 100 memory-mode trials with the built-in matrix and defaults.
    Paper100,
}

#[derive(Args)]
struct RunArgs {
    /// Base config JSON; CLI flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma_target: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Perception matrix for the filter: "builtin", "estimate", or a
    /// matrix JSON path.
    #[arg(long)]
    matrix: Option<String>,
    /// Classifier model JSON (trajectory sensor / matrix estimation).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    sensor: Option<SensorArg>,
    #[arg(long, value_enum)]
    offset_sampling: Option<SamplingArg>,
    /// Smoothing strength when estimating the matrix from a model.
    #[arg(long)]
    alpha: Option<f64>,
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output directory for summary.json, metrics.csv, trials.jsonl,
    /// run_config.json (per-arm subdirectories in both mode).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for trajectory CSVs and manifest.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    n: i32,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Offset grid half-range in mm.
    #[arg(long, default_value_t = 1.75)]
    halfspan: f64,
    /// Offset grid step in mm.
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    /// Trajectories per grid position.
    #[arg(long, default_value_t = 50)]
    reps: usize,
    /// Samples per trajectory.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0.05)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest JSON.
    #[arg(long)]
    data: PathBuf,
    /// Output model JSON.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    n: i32,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    /// Stratified train fraction; the rest reports held-out accuracy.
    #[arg(long, default_value_t = 0.7)]
    train_frac: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct EvalMatrixArgs {
    /// Classifier model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Held-out dataset manifest (use a freshly generated dataset).
    #[arg(long)]
    data: PathBuf,
    /// Output matrix JSON.
    #[arg(long)]
    out: PathBuf,
    /// Additive smoothing strength.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
}

#[derive(Args)]
struct ReportArgs {
    /// An existing trials.jsonl.
    #[arg(long)]
    logs: PathBuf,
    /// Directory for the recomputed metrics.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Synth(args) => synth(args),
        Command::Train(args) => train(args),
        Command::EvalMatrix(args) => eval_matrix(args),
        Command::Report(args) => report(args),
    }
}

fn build_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => RunConfig::default(),
    };

    if let Some(PresetArg::Paper100) = args.preset {
        cfg = RunConfig {
            out_dir: cfg.out_dir.clone(),
            ..RunConfig::default()
        };
        cfg.trials = 100;
    }

    if let Some(mode) = args.mode {
        cfg.controller.mode = match mode {
            ModeArg::Memory | ModeArg::Both => ControllerMode::Memory,
            ModeArg::Memoryless => ControllerMode::Memoryless,
        };
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(gamma) = args.gamma_target {
        cfg.controller.gamma_target = gamma;
    }
    if let Some(iters) = args.max_iters {
        cfg.controller.max_iterations = iters;
    }
    if let Some(sensor) = args.sensor {
        cfg.env.sensor_mode = match sensor {
            SensorArg::Matrix => SensorMode::MatrixSampled,
            SensorArg::Trajectory => SensorMode::TrajectoryClassified,
        };
    }
    if let Some(sampling) = args.offset_sampling {
        cfg.offset_sampling = match sampling {
            SamplingArg::Uniform => OffsetSampling::Uniform,
            SamplingArg::Stratified => OffsetSampling::Stratified,
        };
    }
    if let Some(model) = &args.model {
        cfg.model_file = Some(model.clone());
    }
    if let Some(matrix) = &args.matrix {
        cfg.matrix = match matrix.as_str() {
            "builtin" => MatrixSource::Builtin,
            "estimate" => {
                let model = cfg
                    .model_file
                    .clone()
                    .context("--matrix estimate needs --model")?;
                MatrixSource::EstimateFromModel {
                    model,
                    alpha: args.alpha.unwrap_or(0.5),
                    reps: 20,
                    seed: cfg.master_seed,
                }
            }
            path => MatrixSource::File(PathBuf::from(path)),
        };
    }
    cfg.out_dir = Some(args.out.clone());
    Ok(cfg)
}

fn print_summary(report: &SummaryReport) {
    println!(
        "{:?}: {} trials -> {} success / {} wrong stop / {} capped; success rate {:.4}, mean stop iteration {}",
        report.mode,
        report.trials,
        report.stopped_success,
        report.stopped_failure,
        report.max_iters_reached,
        report.success_rate,
        report
            .mean_iterations_to_stop
            .map(|m| format!("{m:.2}"))
            .unwrap_or_else(|| "-".into()),
    );
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = build_config(&args)?;
    let both = matches!(args.mode, Some(ModeArg::Both));
    let modes: Vec<ControllerMode> = if both {
        vec![ControllerMode::Memory, ControllerMode::Memoryless]
    } else {
        vec![cfg.controller.mode]
    };

    for mode in modes {
        let mut arm_cfg = cfg.clone();
        if both {
            let sub = match mode {
                ControllerMode::Memory => "memory",
                ControllerMode::Memoryless => "memoryless",
            };
            arm_cfg.out_dir = Some(args.out.join(sub));
        }
        let arm = run_experiment(&arm_cfg, mode, args.workers)
            .with_context(|| format!("running {mode:?} arm"))?;
        print_summary(&arm.report);
        if let Some(dir) = &arm_cfg.out_dir {
            println!("  wrote {}", dir.display());
        }
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let space = StatusSpace::new(args.n, args.delta).context("bad status space")?;
    let params = TrajectoryParams {
        samples: args.samples,
        noise_sigma: args.noise_sigma,
        ..TrajectoryParams::default()
    };
    let positions = grid_positions(args.halfspan, args.step);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let set = generate_dataset(
        &space,
        args.halfspan,
        &params,
        &positions,
        args.reps,
        &mut rng,
    )
    .context("generating dataset")?;
    write_dataset(&args.out, &set)
        .with_context(|| format!("writing dataset to {}", args.out.display()))?;
    println!(
        "wrote {} trajectories ({} positions x {} reps) to {}",
        set.len(),
        positions.len(),
        args.reps,
        args.out.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    if !(args.train_frac > 0.0 && args.train_frac < 1.0) {
        bail!("--train-frac must be in (0, 1)");
    }
    let space = StatusSpace::new(args.n, args.delta).context("bad status space")?;
    let data = read_dataset(&args.data, &space).context("loading dataset")?;
    let (train_set, heldout) = split_stratified(&data, args.train_frac, args.seed);
    let cfg = TrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        l2_penalty: args.l2,
        seed: args.seed,
    };
    let model = train_classifier(&space, &train_set, &cfg).context("training classifier")?;
    let acc = accuracy(&model, &heldout).context("evaluating held-out accuracy")?;
    write_model(&args.out, &model)
        .with_context(|| format!("writing model to {}", args.out.display()))?;
    println!(
        "trained on {} samples; held-out accuracy {:.4} on {} samples; wrote {}",
        train_set.len(),
        acc,
        heldout.len(),
        args.out.display()
    );
    Ok(())
}

fn eval_matrix(args: EvalMatrixArgs) -> Result<()> {
    let model = read_model(&args.model).context("loading model")?;
    let data = read_dataset(&args.data, &model.space).context("loading dataset")?;
    let confusion =
        estimate_confusion(&model, &data, args.alpha).context("estimating confusion matrix")?;
    matrix::write_matrix(&args.out, &confusion)
        .with_context(|| format!("writing matrix to {}", args.out.display()))?;
    println!(
        "estimated {}x{} matrix from {} samples (alpha {}); wrote {}",
        confusion.rows().len(),
        confusion.rows().len(),
        data.len(),
        args.alpha,
        args.out.display()
    );
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let logs = read_trials(&args.logs).context("loading trial logs")?;
    if logs.is_empty() {
        bail!("{} contains no trials", args.logs.display());
    }
    let mode = logs[0].mode;
    if logs.iter().any(|l| l.mode != mode) {
        bail!("trial log mixes controller modes");
    }
    let metrics = compute_metrics(&logs);
    let report = summarize(&logs, mode, None);

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    // Reuse the standard writers, then drop the files report cannot
    // reconstruct (the config echo and the log copy).
    let placeholder = RunConfig::default();
    write_outputs(&args.out, &report, &metrics, &[], &placeholder)
        .context("writing report outputs")?;
    std::fs::remove_file(args.out.join("run_config.json")).ok();
    std::fs::remove_file(args.out.join("trials.jsonl")).ok();

    print_summary(&report);
    println!("  wrote {}", args.out.display());
    Ok(())
}
