//! The reliability distribution over contact statuses and its two update
//! rules.
//!
//! A [`Belief`] stores `P(s)` for every status in canonical ascending order.
//! One control iteration applies:
//!
//! 1. a *shift update* re-indexing the distribution by the commanded
//!    correction `u` and zeroing mass shifted out of range (no
//!    renormalisation takes place here), then
//! 2. a *measurement update* multiplying by the likelihood column
//!    `p(z | s)` and renormalising.
//!
//! The MAP status and its probability ("reliability") drive the stopping
//! rule in the controller.

use crate::error::BeliefError;
use crate::matrix::PerceptionMatrix;
use crate::space::{ActionCmd, PerceptSignal, Status, StatusSpace};
use serde::{Deserialize, Serialize};

/// Relative tolerance under which two probabilities count as tied in
/// [`Belief::map_estimate`]. Likelihood-ratio cancellations produce
/// posteriors that are equal up to floating-point rounding; resolving
/// them through the deterministic tie-break instead of rounding noise
/// keeps runs reproducible.
const MAP_TIE_REL_TOL: f64 = 1e-9;

/// A (possibly unnormalised) probability distribution over statuses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    space: StatusSpace,
    probs: Vec<f64>,
}

impl Belief {
    /// The maximum-entropy initial distribution: every status at
    /// `1 / (2n + 1)`.
    pub fn uniform(space: StatusSpace) -> Self {
        let k = space.cardinality();
        Belief {
            space,
            probs: vec![1.0 / k as f64; k],
        }
    }

    /// A distribution from explicit per-status masses in canonical order.
    pub fn from_probs(space: StatusSpace, probs: Vec<f64>) -> Result<Self, BeliefError> {
        if probs.len() != space.cardinality() {
            return Err(BeliefError::InvalidSpace(format!(
                "expected {} entries, got {}",
                space.cardinality(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(BeliefError::InvalidSpace(
                "belief entries must be finite and non-negative".into(),
            ));
        }
        Ok(Belief { space, probs })
    }

    /// All mass on a single status.
    pub fn delta(space: StatusSpace, at: Status) -> Self {
        let mut probs = vec![0.0; space.cardinality()];
        probs[space.index_of(at)] = 1.0;
        Belief { space, probs }
    }

    pub fn space(&self) -> &StatusSpace {
        &self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, s: Status) -> f64 {
        self.probs[self.space.index_of(s)]
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Shift update: `result[s] = self[s - u]` where defined, zero
    /// elsewhere. Mass shifted outside the status set is truncated and no
    /// renormalisation happens; the next measurement update's normaliser
    /// absorbs it.
    pub fn shift_update(&self, u: ActionCmd) -> Result<Belief, BeliefError> {
        let n = self.space.n();
        let mut probs = vec![0.0; self.space.cardinality()];
        for s in -n..=n {
            let src = s - u.value();
            if src.abs() <= n {
                probs[(s + n) as usize] = self.probs[(src + n) as usize];
            }
        }
        if probs.iter().all(|p| *p == 0.0) {
            return Err(BeliefError::EmptyShiftedBelief { shift: u.value() });
        }
        Ok(Belief {
            space: self.space,
            probs,
        })
    }

    /// Measurement update: multiply by the likelihood column `p(z | s)`
    /// and renormalise. Fails with [`BeliefError::ImpossibleObservation`]
    /// when the observation has zero likelihood under the whole prior
    /// support.
    pub fn measurement_update(
        &self,
        z: PerceptSignal,
        matrix: &PerceptionMatrix,
    ) -> Result<Belief, BeliefError> {
        let weighted: Vec<f64> = self
            .space
            .statuses()
            .map(|s| matrix.likelihood(s, z) * self.prob(s))
            .collect();
        let eta: f64 = weighted.iter().sum();
        if eta <= 0.0 {
            return Err(BeliefError::ImpossibleObservation { signal: z.value() });
        }
        Ok(Belief {
            space: self.space,
            probs: weighted.into_iter().map(|w| w / eta).collect(),
        })
    }

    /// MAP estimate: the status with maximum reliability and that
    /// reliability. Near-ties (within `1e-9` relative) resolve
    /// deterministically: smallest `|s|` wins, then negative `s`.
    ///
    /// Works on unnormalised beliefs; the returned reliability is always
    /// normalised, so the result is invariant under positive rescaling.
    pub fn map_estimate(&self) -> (Status, f64) {
        let total = self.total_mass();
        debug_assert!(total > 0.0, "map_estimate on an all-zero belief");
        let max = self.probs.iter().cloned().fold(f64::MIN, f64::max);
        let cutoff = max - MAP_TIE_REL_TOL * max.abs();
        let best = self
            .space
            .statuses()
            .filter(|s| self.prob(*s) >= cutoff)
            .min_by_key(|s| (s.value().abs(), s.value().signum()))
            .expect("non-empty status set");
        (best, self.prob(best) / total)
    }
}
