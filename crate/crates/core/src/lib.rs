//! Reliability-controlled flexible-flat-cable insertion: discrete Bayes
//! filtering over contact statuses, a simulated insertion world, a tactile
//! trajectory classifier, and a Monte-Carlo experiment harness.
//!
//! The crate is organised around the insertion loop
//! perceive -> update belief -> act -> stop at target reliability:
//!
//! * [`space`] — the discrete status/action/percept encoding.
//! * [`belief`] — the reliability distribution and its two update rules.
//! * [`matrix`] — row-stochastic perception (confusion) matrices.
//! * [`sim`] — continuous-offset insertion world and synthetic tactile
//!   trajectory generator.
//! * [`perception`] — trajectory features, softmax classifier, confusion
//!   estimation.
//! * [`controller`] — the reliability-controlled loop and the memoryless
//!   baseline.
//! * [`experiment`] — seeded campaigns, per-iteration metrics, file outputs.

// Validators use `!(x > 0.0)` so NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod controller;
pub mod error;
pub mod experiment;
pub mod matrix;
pub mod perception;
pub mod sim;
pub mod space;

pub use belief::Belief;
pub use controller::{
    ControllerConfig, ControllerMode, IterationRecord, OnImpossible, TrialLog, TrialOutcome,
};
pub use error::{BeliefError, PerceptionError, SimError};
pub use matrix::PerceptionMatrix;
pub use sim::{EnvConfig, EnvState, Trajectory, TrajectoryParams};
pub use space::{ActionCmd, PerceptSignal, Status, StatusSpace};
