//! Simulated insertion world.
//!
//! The cable sits at a continuous signed offset (positive = left error).
//! The insertable band `M` is `[-delta/2, +delta/2]`; error regions of
//! width `delta` tile outward from it and the discrete status saturates at
//! `+/-n` even though the physical offset is unbounded. Actions move the
//! offset in quanta of `delta`.
//!
//! Two sensors are provided: sampling a percept from a perception-matrix
//! row of the true status, and synthesising a three-axis tactile
//! trajectory for a classifier to interpret. The synthetic generator
//! reproduces the qualitative force trends of a real insertion: a success
//! bump on X with flat shear, and for misalignments ramps whose Y
//! amplitude rises then falls with the error magnitude while the Z
//! amplitude keeps growing.

use crate::controller::InsertionWorld;
use crate::error::SimError;
use crate::matrix::PerceptionMatrix;
use crate::space::{ActionCmd, PerceptSignal, Status, StatusSpace};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

/// How the world turns an insertion into a percept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorMode {
    /// Draw the percept from the matrix row of the true status.
    MatrixSampled,
    /// Synthesise a tactile trajectory and classify it.
    TrajectoryClassified,
}

/// World geometry and sensing mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub space: StatusSpace,
    /// Reachable half-range for initial offsets; defaults to
    /// `n * delta + delta/2`, the outer edge of the modelled band.
    pub offset_halfspan_mm: f64,
    pub sensor_mode: SensorMode,
}

impl EnvConfig {
    pub fn new(
        space: StatusSpace,
        offset_halfspan_mm: Option<f64>,
        sensor_mode: SensorMode,
    ) -> Result<Self, SimError> {
        let halfspan = offset_halfspan_mm.unwrap_or_else(|| default_halfspan(&space));
        if !(halfspan >= space.delta_mm() / 2.0) {
            return Err(SimError::InvalidConfig(format!(
                "offset_halfspan_mm = {halfspan}, need at least delta/2 = {}",
                space.delta_mm() / 2.0
            )));
        }
        Ok(EnvConfig {
            space,
            offset_halfspan_mm: halfspan,
            sensor_mode,
        })
    }
}

/// `n * delta + delta/2`: the band covered by the discrete statuses.
pub fn default_halfspan(space: &StatusSpace) -> f64 {
    space.n() as f64 * space.delta_mm() + space.delta_mm() / 2.0
}

/// Physical state: the signed cable offset and how many insertions have
/// been performed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub offset_mm: f64,
    pub insert_count: u64,
}

/// Place the cable at an initial offset within the reachable band.
pub fn init_env(cfg: &EnvConfig, initial_offset_mm: f64) -> Result<EnvState, SimError> {
    if initial_offset_mm.abs() > cfg.offset_halfspan_mm || !initial_offset_mm.is_finite() {
        return Err(SimError::OffsetOutOfRange {
            offset_mm: initial_offset_mm,
            halfspan_mm: cfg.offset_halfspan_mm,
        });
    }
    Ok(EnvState {
        offset_mm: initial_offset_mm,
        insert_count: 0,
    })
}

/// Discrete status of an offset: `0` while `|offset| <= delta/2`, otherwise
/// `sign(offset) * ceil((|offset| - delta/2) / delta)` saturated at `n`.
/// Boundary points belong to the region closer to `M`.
pub fn status_of_offset(offset_mm: f64, space: &StatusSpace) -> Status {
    let half = space.delta_mm() / 2.0;
    let mag = offset_mm.abs();
    if mag <= half {
        return Status(0);
    }
    let k = ((mag - half) / space.delta_mm()).ceil() as i32;
    Status(offset_mm.signum() as i32 * k.min(space.n()))
}

pub fn status_of(state: &EnvState, space: &StatusSpace) -> Status {
    status_of_offset(state.offset_mm, space)
}

/// Move the cable by `u` clearance units. The offset is not clamped: a
/// wrong estimate can push the cable outside the modelled band, where the
/// status saturates.
pub fn apply_action(state: &EnvState, u: ActionCmd, space: &StatusSpace) -> EnvState {
    EnvState {
        offset_mm: state.offset_mm + u.value() as f64 * space.delta_mm(),
        insert_count: state.insert_count,
    }
}

/// Draw a percept from the matrix row of the state's true status.
pub fn sample_percept(
    state: &EnvState,
    matrix: &PerceptionMatrix,
    space: &StatusSpace,
    rng: &mut ChaCha8Rng,
) -> PerceptSignal {
    let row = matrix.row(status_of(state, space));
    let x: f64 = rng.gen();
    let mut acc = 0.0;
    for (j, p) in row.iter().enumerate() {
        acc += p;
        if x < acc {
            return PerceptSignal(j as i32 - space.n());
        }
    }
    PerceptSignal(space.n())
}

/// Shape parameters of the synthetic trajectory generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryParams {
    /// Samples per insertion.
    pub samples: usize,
    /// Success-bump / ramp amplitude on the X axis.
    pub a_x: f64,
    /// Scale of the Y amplitude curve.
    pub c_y: f64,
    /// Error magnitude (mm) at which the Y amplitude peaks.
    pub m0_mm: f64,
    /// Z amplitude slope per mm of error magnitude.
    pub c_z: f64,
    /// Per-sample Gaussian noise standard deviation on each axis.
    pub noise_sigma: f64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        TrajectoryParams {
            samples: 100,
            a_x: 1.0,
            c_y: 1.0,
            m0_mm: 0.75,
            c_z: 0.8,
            noise_sigma: 0.05,
        }
    }
}

impl TrajectoryParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.samples < 2 {
            return Err(SimError::InvalidParams(format!(
                "samples = {}, need at least 2",
                self.samples
            )));
        }
        if !(self.a_x >= 0.0 && self.c_y >= 0.0 && self.c_z >= 0.0) {
            return Err(SimError::InvalidParams("amplitudes must be >= 0".into()));
        }
        if !(self.m0_mm > 0.0) {
            return Err(SimError::InvalidParams("m0_mm must be > 0".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(SimError::InvalidParams("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// A `T`-sample three-axis tactile time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `[x, y, z]` per sample.
    pub samples: Vec<[f64; 3]>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Flip the Y axis; mirrors a left-error trajectory into the
    /// corresponding right-error one.
    pub fn mirrored(&self) -> Trajectory {
        Trajectory {
            samples: self.samples.iter().map(|[x, y, z]| [*x, -*y, *z]).collect(),
        }
    }
}

/// Peak Y amplitude for an error magnitude `m`: rises up to `m0` and falls
/// beyond it.
pub fn y_amplitude(m: f64, params: &TrajectoryParams) -> f64 {
    params.c_y * (m / params.m0_mm) * (1.0 - m / params.m0_mm).exp()
}

/// Final Z value for an error magnitude `m`: grows linearly.
pub fn z_amplitude(m: f64, params: &TrajectoryParams) -> f64 {
    params.c_z * m
}

/// Synthesise one insertion's tactile trajectory at the current offset.
///
/// With `m = max(0, |offset| - delta/2)` and `r(t) = t/T`:
/// a successful insertion (`m = 0`) produces `x = a_x * sin(pi t / T)` and
/// flat `y`, `z`; a misaligned one produces ramps `x = a_x * r`,
/// `y = sign(offset) * y_amplitude(m) * r`, `z = z_amplitude(m) * r`.
/// Independent Gaussian noise of `noise_sigma` is added per sample and
/// axis (drawn in x, y, z order for stream stability).
pub fn synth_trajectory(
    state: &EnvState,
    space: &StatusSpace,
    params: &TrajectoryParams,
    rng: &mut ChaCha8Rng,
) -> Trajectory {
    let t_count = params.samples;
    let m = (state.offset_mm.abs() - space.delta_mm() / 2.0).max(0.0);
    let sigma = state.offset_mm.signum();
    let (a_y, a_z) = (y_amplitude(m, params), z_amplitude(m, params));
    let noise = (params.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, params.noise_sigma).expect("valid sigma"));

    let mut samples = Vec::with_capacity(t_count);
    for t in 1..=t_count {
        let r = t as f64 / t_count as f64;
        let mut sample = if m == 0.0 {
            [params.a_x * (PI * r).sin(), 0.0, 0.0]
        } else {
            [params.a_x * r, sigma * a_y * r, a_z * r]
        };
        if let Some(noise) = &noise {
            for axis in &mut sample {
                *axis += noise.sample(rng);
            }
        }
        samples.push(sample);
    }
    Trajectory { samples }
}

/// Symmetric grid of offsets: `-halfspan, -halfspan + step, ..., +halfspan`.
pub fn grid_positions(halfspan_mm: f64, step_mm: f64) -> Vec<f64> {
    let count = (2.0 * halfspan_mm / step_mm).round() as usize + 1;
    (0..count)
        .map(|i| -halfspan_mm + i as f64 * step_mm)
        .collect()
}

// ---------------------------------------------------------------------------
// Sensors and controller-facing worlds
// ---------------------------------------------------------------------------

/// Converts the physical state of one insertion into a percept.
pub trait Sensor: Sync {
    fn sense(&self, state: &EnvState, space: &StatusSpace, rng: &mut ChaCha8Rng) -> PerceptSignal;
}

/// Samples percepts from a perception matrix (the generative use of the
/// confusion model).
pub struct MatrixSensor {
    pub matrix: PerceptionMatrix,
}

impl Sensor for MatrixSensor {
    fn sense(&self, state: &EnvState, space: &StatusSpace, rng: &mut ChaCha8Rng) -> PerceptSignal {
        sample_percept(state, &self.matrix, space, rng)
    }
}

/// A simulated world driving one controller run.
pub struct SimWorld<'a, S: Sensor> {
    space: StatusSpace,
    state: EnvState,
    sensor: &'a S,
    initial_offset_mm: f64,
}

impl<'a, S: Sensor> SimWorld<'a, S> {
    pub fn new(cfg: &EnvConfig, sensor: &'a S, initial_offset_mm: f64) -> Result<Self, SimError> {
        let state = init_env(cfg, initial_offset_mm)?;
        Ok(SimWorld {
            space: cfg.space,
            state,
            sensor,
            initial_offset_mm,
        })
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }
}

impl<S: Sensor> InsertionWorld for SimWorld<'_, S> {
    fn space(&self) -> &StatusSpace {
        &self.space
    }

    fn true_status(&self) -> Status {
        status_of(&self.state, &self.space)
    }

    fn apply(&mut self, u: ActionCmd) {
        self.state = apply_action(&self.state, u, &self.space);
    }

    fn sense(&mut self, rng: &mut ChaCha8Rng) -> PerceptSignal {
        self.state.insert_count += 1;
        self.sensor.sense(&self.state, &self.space, rng)
    }

    fn initial_offset_mm(&self) -> f64 {
        self.initial_offset_mm
    }
}

/// A world that replays a scripted percept sequence (cycling when
/// exhausted) while tracking the true offset. Deterministic stand-in for
/// the stochastic sensors in tests.
pub struct ScriptedWorld {
    space: StatusSpace,
    state: EnvState,
    script: Vec<PerceptSignal>,
    cursor: usize,
    initial_offset_mm: f64,
}

impl ScriptedWorld {
    pub fn new(space: StatusSpace, initial_offset_mm: f64, script: Vec<PerceptSignal>) -> Self {
        assert!(!script.is_empty(), "script must not be empty");
        ScriptedWorld {
            space,
            state: EnvState {
                offset_mm: initial_offset_mm,
                insert_count: 0,
            },
            script,
            cursor: 0,
            initial_offset_mm,
        }
    }
}

impl InsertionWorld for ScriptedWorld {
    fn space(&self) -> &StatusSpace {
        &self.space
    }

    fn true_status(&self) -> Status {
        status_of(&self.state, &self.space)
    }

    fn apply(&mut self, u: ActionCmd) {
        self.state = apply_action(&self.state, u, &self.space);
    }

    fn sense(&mut self, _rng: &mut ChaCha8Rng) -> PerceptSignal {
        self.state.insert_count += 1;
        let z = self.script[self.cursor % self.script.len()];
        self.cursor += 1;
        z
    }

    fn initial_offset_mm(&self) -> f64 {
        self.initial_offset_mm
    }
}

// ---------------------------------------------------------------------------
// Trajectory file I/O
// ---------------------------------------------------------------------------

/// Write a trajectory as CSV with header `t,x,y,z`, one row per sample.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "t,x,y,z")?;
    for (i, [x, y, z]) in traj.samples.iter().enumerate() {
        writeln!(w, "{},{},{},{}", i + 1, x, y, z)?;
    }
    w.flush()
}

pub fn read_trajectory_csv(path: &Path) -> std::io::Result<Trajectory> {
    let bad = |msg: String| std::io::Error::new(std::io::ErrorKind::InvalidData, msg);
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(header)) if header.trim() == "t,x,y,z" => {}
        other => return Err(bad(format!("expected header t,x,y,z, got {other:?}"))),
    }
    let mut samples = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", fields.len())));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("bad number {s:?}: {e}")))
        };
        samples.push([parse(fields[1])?, parse(fields[2])?, parse(fields[3])?]);
    }
    Ok(Trajectory { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn space() -> StatusSpace {
        StatusSpace::default_seven()
    }

    fn cfg() -> EnvConfig {
        EnvConfig::new(space(), None, SensorMode::MatrixSampled).unwrap()
    }

    #[test]
    fn default_halfspan_covers_the_band() {
        assert!((default_halfspan(&space()) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn init_env_checks_the_range() {
        assert_eq!(init_env(&cfg(), 0.0).unwrap().offset_mm, 0.0);
        let state = init_env(&cfg(), 1.75).unwrap();
        assert_eq!(status_of(&state, &space()), Status(3));
        assert!(matches!(
            init_env(&cfg(), 2.0),
            Err(SimError::OffsetOutOfRange { .. })
        ));
    }

    #[test]
    fn status_binning() {
        let s = space();
        assert_eq!(status_of_offset(0.0, &s), Status(0));
        assert_eq!(status_of_offset(0.25, &s), Status(0));
        assert_eq!(status_of_offset(-0.25, &s), Status(0));
        assert_eq!(status_of_offset(-0.6, &s), Status(-1));
        assert_eq!(status_of_offset(0.75, &s), Status(1));
        assert_eq!(status_of_offset(0.76, &s), Status(2));
        assert_eq!(status_of_offset(1.75, &s), Status(3));
        // Saturation outside the modelled band.
        assert_eq!(status_of_offset(3.2, &s), Status(3));
        assert_eq!(status_of_offset(-9.0, &s), Status(-3));
    }

    #[test]
    fn actions_move_in_clearance_quanta() {
        let s = space();
        let state = EnvState {
            offset_mm: 0.9,
            insert_count: 0,
        };
        let moved = apply_action(&state, ActionCmd(-2), &s);
        assert!((moved.offset_mm - -0.1).abs() < 1e-12);
        assert_eq!(status_of(&moved, &s), Status(0));

        let unchanged = apply_action(&state, ActionCmd(0), &s);
        assert_eq!(unchanged.offset_mm, state.offset_mm);

        let out = apply_action(
            &EnvState {
                offset_mm: 1.7,
                insert_count: 0,
            },
            ActionCmd(3),
            &s,
        );
        assert!((out.offset_mm - 3.2).abs() < 1e-12);
        assert_eq!(status_of(&out, &s), Status(3));
    }

    #[test]
    fn identity_matrix_sampling_is_exact() {
        let s = space();
        let m = PerceptionMatrix::identity(s);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for offset in [-1.6, -0.4, 0.0, 0.6, 1.2] {
            let state = EnvState {
                offset_mm: offset,
                insert_count: 0,
            };
            let z = sample_percept(&state, &m, &s, &mut rng);
            assert_eq!(z.value(), status_of(&state, &s).value());
        }
    }

    #[test]
    fn sampling_is_reproducible_and_roughly_calibrated() {
        let s = space();
        let m = crate::matrix::default_perception_matrix();
        let state = EnvState {
            offset_mm: 0.0,
            insert_count: 0,
        };

        let draw = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10_000)
                .map(|_| sample_percept(&state, &m, &s, &mut rng).value())
                .collect::<Vec<i32>>()
        };
        assert_eq!(draw(7), draw(7));

        let hits = draw(7).iter().filter(|z| **z == 0).count() as f64 / 10_000.0;
        assert!((hits - 0.9636).abs() < 0.01, "p(M|M) frequency {hits}");
    }

    #[test]
    fn success_trajectory_is_a_bump_with_flat_shear() {
        let params = TrajectoryParams {
            noise_sigma: 0.0,
            ..TrajectoryParams::default()
        };
        let state = EnvState {
            offset_mm: 0.0,
            insert_count: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = synth_trajectory(&state, &space(), &params, &mut rng);
        assert_eq!(traj.len(), 100);
        for [_, y, z] in &traj.samples {
            assert_eq!(*y, 0.0);
            assert_eq!(*z, 0.0);
        }
        // x peaks mid-insertion and returns to ~0.
        let xs: Vec<f64> = traj.samples.iter().map(|s| s[0]).collect();
        assert!((xs[49] - 1.0).abs() < 1e-12);
        assert!(xs[99].abs() < 1e-12);
    }

    #[test]
    fn misaligned_trajectory_hits_closed_form_amplitudes() {
        let params = TrajectoryParams {
            noise_sigma: 0.0,
            ..TrajectoryParams::default()
        };
        // offset +1.0 -> m = 0.75 = m0: maximum Y amplitude.
        let state = EnvState {
            offset_mm: 1.0,
            insert_count: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = synth_trajectory(&state, &space(), &params, &mut rng);
        let last = traj.samples.last().unwrap();
        assert!((last[1] - 1.0).abs() < 1e-12);
        assert!((last[2] - 0.6).abs() < 1e-12);
        assert!((last[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn left_right_offsets_mirror_in_y_only() {
        let params = TrajectoryParams {
            noise_sigma: 0.0,
            ..TrajectoryParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let left = synth_trajectory(
            &EnvState {
                offset_mm: 0.6,
                insert_count: 0,
            },
            &space(),
            &params,
            &mut rng,
        );
        let right = synth_trajectory(
            &EnvState {
                offset_mm: -0.6,
                insert_count: 0,
            },
            &space(),
            &params,
            &mut rng,
        );
        for (l, r) in left.samples.iter().zip(right.samples.iter()) {
            assert_eq!(l[0], r[0]);
            assert_eq!(l[1], -r[1]);
            assert_eq!(l[2], r[2]);
        }
        assert_eq!(left.mirrored().samples, right.samples);
    }

    #[test]
    fn grid_has_expected_count_and_boundaries() {
        let grid = grid_positions(1.75, 0.05);
        assert_eq!(grid.len(), 71);
        assert_eq!(grid[0], -1.75);
        assert_eq!(*grid.last().unwrap(), 1.75);
        // Boundary offsets land exactly on region edges.
        assert_eq!(grid[40], 0.25);
        assert_eq!(status_of_offset(grid[40], &space()), Status(0));
        assert_eq!(grid[50], 0.75);
        assert_eq!(status_of_offset(grid[50], &space()), Status(1));
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let params = TrajectoryParams::default();
        let state = EnvState {
            offset_mm: -0.8,
            insert_count: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let traj = synth_trajectory(&state, &space(), &params, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        write_trajectory_csv(&path, &traj).unwrap();
        let back = read_trajectory_csv(&path).unwrap();
        assert_eq!(back, traj);
    }
}
