//! Insertion controllers.
//!
//! The memory controller runs the reliability-controlled loop: shift the
//! belief by the commanded correction, insert, observe, update the belief,
//! and stop once the MAP status is `M` with reliability strictly above the
//! target. The memoryless baseline trusts each raw percept directly and
//! stops on the first `M` signal, which is exactly how it fails: premature
//! stops on false positives and left/right oscillation that only the
//! iteration cap terminates.

use crate::belief::Belief;
use crate::error::BeliefError;
use crate::matrix::PerceptionMatrix;
use crate::space::{ActionCmd, PerceptSignal, Status, StatusSpace};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which controller drives a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    Memory,
    Memoryless,
}

/// Recovery policy when an observation has zero likelihood under the
/// belief support (model/simulator mismatch).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnImpossible {
    /// Reset the belief to uniform, flag the record, keep going.
    ResetUniform,
    /// Propagate the error and abandon the trial.
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub gamma_target: f64,
    pub max_iterations: usize,
    pub mode: ControllerMode,
    pub on_impossible: OnImpossible,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            gamma_target: 0.999,
            max_iterations: 20,
            mode: ControllerMode::Memory,
            on_impossible: OnImpossible::ResetUniform,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), BeliefError> {
        if !(self.gamma_target > 0.0 && self.gamma_target < 1.0) {
            return Err(BeliefError::InvalidSpace(format!(
                "gamma_target = {}, need a value in (0, 1)",
                self.gamma_target
            )));
        }
        if self.max_iterations < 1 {
            return Err(BeliefError::InvalidSpace(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// The corrective command for an estimated status: `u = -s_hat`.
pub fn select_action(s_hat: Status) -> ActionCmd {
    ActionCmd(-s_hat.value())
}

/// Stop if and only if the MAP status is `M` and its reliability strictly
/// exceeds the target.
pub fn should_stop(s_hat: Status, gamma: f64, cfg: &ControllerConfig) -> bool {
    s_hat.value() == 0 && gamma > cfg.gamma_target
}

/// Full audit of one control iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    /// Action applied at the start of this iteration.
    pub action: ActionCmd,
    pub true_before: Status,
    pub true_after: Status,
    pub percept: PerceptSignal,
    pub estimate: Status,
    /// Probability of the estimate under the post-update belief.
    pub reliability: f64,
    /// The memory module overrode the raw percept (`estimate != percept`).
    pub revised: bool,
    /// The belief was reset to uniform after an impossible observation.
    pub belief_reset: bool,
    /// Belief after the measurement update, canonical ascending order.
    pub belief_after: Vec<f64>,
}

/// How an insertion episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialOutcome {
    /// Stop rule fired with the cable truly insertable.
    StoppedSuccess,
    /// Stop rule fired at a wrong position.
    StoppedFailure,
    /// Iteration cap hit without a stop.
    MaxItersReached,
}

/// One complete insertion episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub trial_id: u64,
    pub master_seed: u64,
    pub mode: ControllerMode,
    pub initial_offset_mm: f64,
    pub outcome: TrialOutcome,
    pub stop_iteration: Option<usize>,
    pub records: Vec<IterationRecord>,
}

/// Identification carried into a [`TrialLog`] by the harness.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrialMeta {
    pub trial_id: u64,
    pub master_seed: u64,
}

/// The world a controller acts in: it exposes the true status for
/// logging, applies corrections, and performs insertions that yield
/// percepts.
pub trait InsertionWorld {
    fn space(&self) -> &StatusSpace;
    fn true_status(&self) -> Status;
    fn apply(&mut self, u: ActionCmd);
    /// Perform one insertion and return the percept it produced.
    fn sense(&mut self, rng: &mut ChaCha8Rng) -> PerceptSignal;
    fn initial_offset_mm(&self) -> f64;
}

/// Run the reliability-controlled loop.
///
/// Iteration `i` applies `u_i` (`u_0 = 0`), shifts the belief, inserts,
/// observes `z_i`, applies the measurement update, and records the MAP
/// estimate; `u_{i+1} = -s_hat_i`. The loop exits through the stop rule
/// or the iteration cap. Impossible observations follow
/// `cfg.on_impossible`; a reset that still cannot explain the percept
/// (an all-zero likelihood column) keeps the uniform belief and moves on.
///
/// `prior` overrides the uniform initial distribution.
pub fn run_memory_controller<W: InsertionWorld>(
    world: &mut W,
    matrix: &PerceptionMatrix,
    cfg: &ControllerConfig,
    meta: TrialMeta,
    prior: Option<&Belief>,
    rng: &mut ChaCha8Rng,
) -> Result<TrialLog, BeliefError> {
    let space = *world.space();
    let mut belief = prior.cloned().unwrap_or_else(|| Belief::uniform(space));
    let mut action = ActionCmd(0);
    let mut records = Vec::new();
    let mut outcome = TrialOutcome::MaxItersReached;
    let mut stop_iteration = None;

    for index in 0..cfg.max_iterations {
        let true_before = world.true_status();
        let shifted = belief.shift_update(action)?;
        world.apply(action);
        let true_after = world.true_status();
        let percept = world.sense(rng);

        let mut belief_reset = false;
        belief = match shifted.measurement_update(percept, matrix) {
            Ok(updated) => updated,
            Err(BeliefError::ImpossibleObservation { .. }) => match cfg.on_impossible {
                OnImpossible::Abort => {
                    return Err(BeliefError::ImpossibleObservation {
                        signal: percept.value(),
                    })
                }
                OnImpossible::ResetUniform => {
                    belief_reset = true;
                    let uniform = Belief::uniform(space);
                    uniform
                        .measurement_update(percept, matrix)
                        .unwrap_or(uniform)
                }
            },
            Err(other) => return Err(other),
        };

        let (estimate, reliability) = belief.map_estimate();
        records.push(IterationRecord {
            index,
            action,
            true_before,
            true_after,
            percept,
            estimate,
            reliability,
            revised: estimate.value() != percept.value(),
            belief_reset,
            belief_after: belief.probs().to_vec(),
        });

        if should_stop(estimate, reliability, cfg) {
            outcome = if world.true_status().value() == 0 {
                TrialOutcome::StoppedSuccess
            } else {
                TrialOutcome::StoppedFailure
            };
            stop_iteration = Some(index);
            break;
        }
        action = select_action(estimate);
    }

    Ok(TrialLog {
        trial_id: meta.trial_id,
        master_seed: meta.master_seed,
        mode: ControllerMode::Memory,
        initial_offset_mm: world.initial_offset_mm(),
        outcome,
        stop_iteration,
        records,
    })
}

/// Run the baseline without the memory module: trust each percept as the
/// estimate, stop on the first `M` signal, otherwise correct by `-z` and
/// insert again. The iteration cap turns endless oscillation into a
/// recorded failure.
pub fn run_memoryless_controller<W: InsertionWorld>(
    world: &mut W,
    cfg: &ControllerConfig,
    meta: TrialMeta,
    rng: &mut ChaCha8Rng,
) -> TrialLog {
    let space = *world.space();
    let mut action = ActionCmd(0);
    let mut records = Vec::new();
    let mut outcome = TrialOutcome::MaxItersReached;
    let mut stop_iteration = None;

    for index in 0..cfg.max_iterations {
        let true_before = world.true_status();
        world.apply(action);
        let true_after = world.true_status();
        let percept = world.sense(rng);
        let estimate = Status(percept.value());

        // Full trust in the percept, rendered as a delta belief.
        records.push(IterationRecord {
            index,
            action,
            true_before,
            true_after,
            percept,
            estimate,
            reliability: 1.0,
            revised: false,
            belief_reset: false,
            belief_after: Belief::delta(space, estimate).probs().to_vec(),
        });

        if estimate.value() == 0 {
            outcome = if world.true_status().value() == 0 {
                TrialOutcome::StoppedSuccess
            } else {
                TrialOutcome::StoppedFailure
            };
            stop_iteration = Some(index);
            break;
        }
        action = select_action(estimate);
    }

    TrialLog {
        trial_id: meta.trial_id,
        master_seed: meta.master_seed,
        mode: ControllerMode::Memoryless,
        initial_offset_mm: world.initial_offset_mm(),
        outcome,
        stop_iteration,
        records,
    }
}
