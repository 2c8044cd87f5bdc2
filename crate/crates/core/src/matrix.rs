//! Row-stochastic perception matrices `p(z | s)`.
//!
//! Rows are indexed by the true status, columns by the emitted percept
//! signal, both in canonical ascending order. The JSON file format carries
//! explicit labels so the on-disk order is never ambiguous; files written
//! with the printed `L3 ... R3` convention are accepted through the
//! `label_order` key and permuted on load.

use crate::error::BeliefError;
use crate::space::{PerceptSignal, Status, StatusSpace};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Tolerance on row sums accepted by the validator.
pub const ROW_SUM_TOL: f64 = 1e-6;

/// A validated row-stochastic likelihood matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionMatrix {
    space: StatusSpace,
    rows: Vec<Vec<f64>>,
}

impl PerceptionMatrix {
    /// Validate and wrap a `(2n+1) x (2n+1)` array of likelihoods in
    /// canonical ascending-status / ascending-signal order.
    pub fn new(space: StatusSpace, rows: Vec<Vec<f64>>) -> Result<Self, BeliefError> {
        let k = space.cardinality();
        if rows.len() != k {
            return Err(BeliefError::MalformedMatrix {
                row: rows.len(),
                reason: format!("expected {k} rows, got {}", rows.len()),
            });
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(BeliefError::MalformedMatrix {
                    row: i,
                    reason: format!("expected {k} columns, got {}", row.len()),
                });
            }
            if let Some(bad) = row
                .iter()
                .find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0)
            {
                return Err(BeliefError::MalformedMatrix {
                    row: i,
                    reason: format!("entry {bad} outside [0, 1]"),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(BeliefError::MalformedMatrix {
                    row: i,
                    reason: format!("row sums to {sum}, not 1"),
                });
            }
        }
        Ok(PerceptionMatrix { space, rows })
    }

    /// The identity matrix: a noiseless sensor.
    pub fn identity(space: StatusSpace) -> Self {
        let k = space.cardinality();
        let rows = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        PerceptionMatrix { space, rows }
    }

    pub fn space(&self) -> &StatusSpace {
        &self.space
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// `p(z | s)`.
    pub fn likelihood(&self, s: Status, z: PerceptSignal) -> f64 {
        let i = self.space.index_of(s);
        let j = (z.value() + self.space.n()) as usize;
        self.rows[i][j]
    }

    /// The row of percept probabilities for a true status.
    pub fn row(&self, s: Status) -> &[f64] {
        &self.rows[self.space.index_of(s)]
    }

    /// Additive smoothing treating each row as `count / total` frequencies
    /// with the given per-row sample counts:
    /// `p <- (p * count + alpha) / (count + alpha * (2n+1))`.
    ///
    /// `alpha = 0` is the identity; any `alpha > 0` makes every entry
    /// strictly positive, guarding the measurement update against hard
    /// zeros in estimated matrices.
    pub fn smooth_with_counts(&self, alpha: f64, counts: &[f64]) -> PerceptionMatrix {
        assert!(alpha >= 0.0, "alpha must be non-negative");
        assert_eq!(counts.len(), self.rows.len());
        let k = self.space.cardinality() as f64;
        let rows = self
            .rows
            .iter()
            .zip(counts)
            .map(|(row, &count)| {
                row.iter()
                    .map(|p| (p * count + alpha) / (count + alpha * k))
                    .collect()
            })
            .collect();
        PerceptionMatrix {
            space: self.space,
            rows,
        }
    }

    /// [`Self::smooth_with_counts`] with unit row counts.
    pub fn smooth(&self, alpha: f64) -> PerceptionMatrix {
        self.smooth_with_counts(alpha, &vec![1.0; self.rows.len()])
    }
}

/// The default likelihoods for the seven-region, 0.5 mm-clearance setup,
/// measured percept frequencies per true status. Rows and columns in
/// canonical ascending order `R3 ... L3`.
pub fn default_perception_matrix() -> PerceptionMatrix {
    let space = StatusSpace::default_seven();
    let rows = vec![
        vec![0.9818, 0.0182, 0.0, 0.0, 0.0, 0.0, 0.0],    // R3
        vec![0.0, 0.9811, 0.0189, 0.0, 0.0, 0.0, 0.0],    // R2
        vec![0.0, 0.0182, 0.9636, 0.0182, 0.0, 0.0, 0.0], // R1
        vec![0.0, 0.0, 0.0182, 0.9636, 0.0182, 0.0, 0.0], // M
        vec![0.0, 0.0, 0.0, 0.0, 0.9818, 0.0182, 0.0],    // L1
        vec![0.0, 0.0, 0.0, 0.0, 0.0182, 0.9636, 0.0182], // L2
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],          // L3
    ];
    PerceptionMatrix::new(space, rows).expect("built-in matrix is valid")
}

/// On-disk representation. `labels` documents the canonical order the
/// rows are stored in; an optional `label_order` declares that `rows`
/// (and their columns) use a different permutation, e.g. the printed
/// `L3 ... R3` convention, and triggers conversion on load.
#[derive(Debug, Serialize, Deserialize)]
struct MatrixFile {
    n: i32,
    labels: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label_order: Option<Vec<String>>,
    rows: Vec<Vec<f64>>,
}

/// Serialize a matrix to the JSON file format (canonical label order).
pub fn to_json(matrix: &PerceptionMatrix) -> serde_json::Value {
    serde_json::json!({
        "n": matrix.space().n(),
        "labels": matrix.space().labels(),
        "rows": matrix.rows(),
    })
}

pub fn write_matrix(path: &Path, matrix: &PerceptionMatrix) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(&to_json(matrix)).expect("matrix serializes");
    std::fs::write(path, text + "\n")
}

/// Parse a matrix file, permuting `label_order` inputs into canonical
/// ascending order and validating row sums. The file format does not
/// carry the clearance, so the caller supplies `delta_mm`.
pub fn from_json(
    value: &serde_json::Value,
    delta_mm: f64,
) -> Result<PerceptionMatrix, BeliefError> {
    let file: MatrixFile = serde_json::from_value(value.clone())
        .map_err(|e| BeliefError::InvalidSpace(format!("bad matrix file: {e}")))?;
    let space = StatusSpace::new(file.n, delta_mm)?;
    let k = space.cardinality();

    let order = match &file.label_order {
        Some(order) => order.clone(),
        None => {
            let canonical = space.labels();
            if file.labels != canonical {
                return Err(BeliefError::InvalidSpace(format!(
                    "labels {:?} are not in canonical order {:?}; \
                     declare the stored order via \"label_order\"",
                    file.labels, canonical
                )));
            }
            canonical
        }
    };
    if order.len() != k {
        return Err(BeliefError::InvalidSpace(format!(
            "label order has {} entries, expected {k}",
            order.len()
        )));
    }
    // perm[i] = canonical index of the i-th stored row/column.
    let perm: Vec<usize> = order
        .iter()
        .map(|l| space.parse_label(l).map(|s| space.index_of(s)))
        .collect::<Result<_, _>>()?;
    {
        let mut seen = vec![false; k];
        for &p in &perm {
            if std::mem::replace(&mut seen[p], true) {
                return Err(BeliefError::InvalidSpace(
                    "label order repeats a label".into(),
                ));
            }
        }
    }

    if file.rows.len() != k || file.rows.iter().any(|r| r.len() != k) {
        return Err(BeliefError::MalformedMatrix {
            row: 0,
            reason: format!("expected a {k}x{k} array"),
        });
    }
    let mut rows = vec![vec![0.0; k]; k];
    for (i, row) in file.rows.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            rows[perm[i]][perm[j]] = p;
        }
    }
    PerceptionMatrix::new(space, rows)
}

pub fn read_matrix(path: &Path, delta_mm: f64) -> Result<PerceptionMatrix, BeliefError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| BeliefError::InvalidSpace(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| BeliefError::InvalidSpace(format!("cannot parse {}: {e}", path.display())))?;
    from_json(&value, delta_mm)
}
