//! Discrete contact-status encoding.
//!
//! The cable's lateral alignment is described by one of `2n+1` regions:
//! the insertable middle region `M` plus `n` left and `n` right error
//! regions, each as wide as the insertion clearance `delta`. Statuses are
//! digitised as integers in `[-n, n]` with positive values for left errors
//! (`+k` <-> `Lk`), negative for right errors (`-k` <-> `Rk`) and `0` for `M`.
//!
//! The canonical index order used by every array in this crate is ascending
//! status, i.e. `R_n, ..., R_1, M, L_1, ..., L_n`.

use crate::error::BeliefError;
use serde::{Deserialize, Serialize};

/// Geometry of the status set: the maximum region index `n` and the
/// insertion clearance `delta` in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatusSpace {
    n: i32,
    delta_mm: f64,
}

impl StatusSpace {
    pub fn new(n: i32, delta_mm: f64) -> Result<Self, BeliefError> {
        if n < 1 {
            return Err(BeliefError::InvalidSpace(format!("n = {n}, need n >= 1")));
        }
        if !(delta_mm > 0.0) {
            return Err(BeliefError::InvalidSpace(format!(
                "delta_mm = {delta_mm}, need delta_mm > 0"
            )));
        }
        Ok(StatusSpace { n, delta_mm })
    }

    /// The seven-region, 0.5 mm-clearance space used throughout the tests.
    pub fn default_seven() -> Self {
        StatusSpace {
            n: 3,
            delta_mm: 0.5,
        }
    }

    pub fn n(&self) -> i32 {
        self.n
    }

    pub fn delta_mm(&self) -> f64 {
        self.delta_mm
    }

    /// Number of statuses, `2n + 1`.
    pub fn cardinality(&self) -> usize {
        (2 * self.n + 1) as usize
    }

    /// Checked constructor for a status value.
    pub fn status(&self, s: i32) -> Result<Status, BeliefError> {
        if s.abs() > self.n {
            return Err(BeliefError::OutOfRange {
                value: s,
                n: self.n,
            });
        }
        Ok(Status(s))
    }

    /// Checked constructor for an action command.
    pub fn action(&self, u: i32) -> Result<ActionCmd, BeliefError> {
        if u.abs() > self.n {
            return Err(BeliefError::OutOfRange {
                value: u,
                n: self.n,
            });
        }
        Ok(ActionCmd(u))
    }

    /// Checked constructor for a percept signal.
    pub fn percept(&self, z: i32) -> Result<PerceptSignal, BeliefError> {
        if z.abs() > self.n {
            return Err(BeliefError::OutOfRange {
                value: z,
                n: self.n,
            });
        }
        Ok(PerceptSignal(z))
    }

    /// Array index of a status in canonical ascending order.
    pub fn index_of(&self, s: Status) -> usize {
        (s.0 + self.n) as usize
    }

    /// Status at a canonical array index.
    pub fn status_at(&self, index: usize) -> Status {
        debug_assert!(index < self.cardinality());
        Status(index as i32 - self.n)
    }

    /// All statuses in canonical ascending order.
    pub fn statuses(&self) -> impl Iterator<Item = Status> + '_ {
        (-self.n..=self.n).map(Status)
    }

    /// Region labels in canonical ascending order, e.g. `R3 ... M ... L3`.
    pub fn labels(&self) -> Vec<String> {
        self.statuses().map(|s| s.label()).collect()
    }

    /// Parse a region label such as `"R2"`, `"M"` or `"L3"`.
    pub fn parse_label(&self, label: &str) -> Result<Status, BeliefError> {
        let parse = |digits: &str, sign: i32| {
            digits
                .parse::<i32>()
                .ok()
                .map(|k| sign * k)
                .ok_or_else(|| BeliefError::InvalidSpace(format!("bad region label {label:?}")))
        };
        let s = match label {
            "M" => 0,
            l if l.starts_with('L') => parse(&l[1..], 1)?,
            l if l.starts_with('R') => parse(&l[1..], -1)?,
            _ => {
                return Err(BeliefError::InvalidSpace(format!(
                    "bad region label {label:?}"
                )))
            }
        };
        self.status(s)
    }
}

/// A contact status in `[-n, n]`; positive = left error, negative = right,
/// zero = insertable region `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Status(pub i32);

impl Status {
    pub fn value(self) -> i32 {
        self.0
    }

    /// Region label: `s=+k` -> `Lk`, `s=-k` -> `Rk`, `s=0` -> `M`.
    pub fn label(self) -> String {
        match self.0 {
            0 => "M".to_string(),
            k if k > 0 => format!("L{k}"),
            k => format!("R{}", -k),
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// An adjustment command in units of `delta`. Applying `u` changes the
/// status value by `+u`, so `u = -s_hat` nulls a correct estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionCmd(pub i32);

impl ActionCmd {
    pub fn value(self) -> i32 {
        self.0
    }
}

/// A percept signal emitted by the perception stage; same label mapping
/// as [`Status`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PerceptSignal(pub i32);

impl PerceptSignal {
    pub fn value(self) -> i32 {
        self.0
    }

    pub fn label(self) -> String {
        Status(self.0).label()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinality_is_2n_plus_1() {
        assert_eq!(StatusSpace::new(3, 0.5).unwrap().cardinality(), 7);
        assert_eq!(StatusSpace::new(1, 0.2).unwrap().cardinality(), 3);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(StatusSpace::new(0, 0.5).is_err());
        assert!(StatusSpace::new(3, 0.0).is_err());
        assert!(StatusSpace::new(3, -1.0).is_err());
        assert!(StatusSpace::new(3, f64::NAN).is_err());
    }

    #[test]
    fn labels_follow_canonical_ascending_order() {
        let space = StatusSpace::default_seven();
        assert_eq!(
            space.labels(),
            vec!["R3", "R2", "R1", "M", "L1", "L2", "L3"]
        );
    }

    #[test]
    fn index_round_trip() {
        let space = StatusSpace::default_seven();
        for s in space.statuses() {
            assert_eq!(space.status_at(space.index_of(s)), s);
        }
        assert_eq!(space.index_of(Status(-3)), 0);
        assert_eq!(space.index_of(Status(0)), 3);
        assert_eq!(space.index_of(Status(3)), 6);
    }

    #[test]
    fn label_parsing() {
        let space = StatusSpace::default_seven();
        assert_eq!(space.parse_label("M").unwrap(), Status(0));
        assert_eq!(space.parse_label("L2").unwrap(), Status(2));
        assert_eq!(space.parse_label("R3").unwrap(), Status(-3));
        assert!(space.parse_label("L4").is_err());
        assert!(space.parse_label("X1").is_err());
        assert!(space.parse_label("").is_err());
    }

    #[test]
    fn range_checks() {
        let space = StatusSpace::default_seven();
        assert!(space.status(3).is_ok());
        assert!(space.status(-4).is_err());
        assert!(space.action(4).is_err());
        assert!(space.percept(-3).is_ok());
    }
}
